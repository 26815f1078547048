"""Federated and homomorphically encrypted training of tabular health-outcome models.

Modules: ``hecore`` (MORE matrix encryption), ``nnet`` (numpy MLP that trains
on plaintext or ciphertexts), ``fedsim`` (in-process federation), ``fedwire``
(networked federation), ``baselines``, ``metrics``, ``datakit``, ``explain``
and ``cli``.
"""

__version__ = "0.1.0"
