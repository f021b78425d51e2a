"""qcfciqmc: circuit-prepared walker bases for FCIQMC plus sign-problem diagnostics."""

__version__ = "0.1.0"
