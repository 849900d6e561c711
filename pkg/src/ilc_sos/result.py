"""Shared result container for both synthesis domains."""

from __future__ import annotations

from dataclasses import dataclass, field

from .soscompiler import CertificateReport, SosCertificate


@dataclass
class SynthesisResult:
    """Outcome of one rate-minimization run.

    ``gamma`` is the guaranteed contraction rate sqrt(eta); ``gains`` maps
    decision ids (learning-function taps, optionally filter taps and the
    positivity margin 'eps') to their optimized values.  ``k_trace`` records
    the bound for every multiplier power k that was solved, ``polya_k`` the
    power that produced the reported bound.
    """

    gamma: float
    eta: float
    gains: dict
    gain_list: list
    epsilon: float | None
    polya_k: int
    k_trace: list
    certificate: SosCertificate | None = None
    certificate_report: CertificateReport | None = None
    solver_status: str = ""
    solver_method: str = ""
    solver_iterations: int = 0
    not_monotone: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.certificate_report is not None and self.certificate_report.passed

    def to_json_dict(self) -> dict:
        rep = self.certificate_report
        return {
            "gamma": self.gamma,
            "eta": self.eta,
            "gains": {k: self.gains[k] for k in sorted(self.gains)},
            "gain_list": list(self.gain_list),
            "epsilon": self.epsilon,
            "polya_k": self.polya_k,
            "k_trace": [[int(k), float(v)] for k, v in self.k_trace],
            "not_monotone": self.not_monotone,
            "certificate": None if rep is None else {
                "passed": rep.passed,
                "residual": rep.residual,
                "scale": rep.scale,
                "min_eig": min(rep.min_eigs) if rep.min_eigs else None,
            },
            "solver": {
                "status": self.solver_status,
                "method": self.solver_method,
                "iterations": self.solver_iterations,
            },
            "diagnostics": self.diagnostics,
        }
