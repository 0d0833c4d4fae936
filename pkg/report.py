"""
Check Report Module

Holds the pass/fail records every validator in the lab produces and turns
the checks stored by a run into a short markdown summary.
Generates:
1. ValidationReport objects (potential hypotheses, weight hypotheses, ...)
2. SUMMARY.md text listing failures, passes and an overall score
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional


@dataclass
class Check:
    passed: bool
    value: Any = None
    detail: str = ""
    # advisory checks are reported but never decide `passed`
    advisory: bool = False
    tol: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": bool(self.passed),
            "value": plain(self.value),
            "tol": plain(self.tol),
            "detail": self.detail,
            "advisory": self.advisory,
        }


@dataclass
class ValidationReport:
    subject: str
    checks: Dict[str, Check] = field(default_factory=dict)
    measured: Dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, passed: bool, value: Any = None, detail: str = "",
            advisory: bool = False, tol: Optional[float] = None) -> Check:
        check = Check(bool(passed), value, detail, advisory, tol)
        self.checks[name] = check
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values() if not c.advisory)

    def failures(self) -> List[str]:
        return [k for k, c in self.checks.items() if not c.passed and not c.advisory]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
            "measured": {k: plain(v) for k, v in self.measured.items()},
        }


def plain(value: Any) -> Any:
    """Convert numpy scalars and tuples into JSON-friendly values."""
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, dict):
        return {k if isinstance(k, str) else str(k): plain(v) for k, v in value.items()}
    return value


def analyze_checks(records: Iterable[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Collect every check found in stored stage records.

    A record contributes every nested "checks" mapping (as written by
    ValidationReport.to_dict); a failed stage counts as one failure.
    Score = % of non-advisory checks passing; advisory checks are listed apart.
    """
    passes: List[Dict[str, Any]] = []
    failures: List[Dict[str, Any]] = []
    advisories: List[Dict[str, Any]] = []

    for record in records:
        stage = record.get("stage", "?")
        payload = record.get("data", {})
        for subject, checks in _iter_check_blocks(payload):
            for name, check in checks.items():
                entry = {
                    "stage": stage,
                    "subject": subject,
                    "check": name,
                    "value": check.get("value"),
                    "tol": check.get("tol"),
                    "detail": check.get("detail", ""),
                }
                if check.get("advisory"):
                    advisories.append(dict(entry, passed=bool(check.get("passed"))))
                    continue
                (passes if check.get("passed") else failures).append(entry)
        if record.get("status") == "failed":
            failures.append({
                "stage": stage,
                "subject": "stage",
                "check": "completed",
                "value": None,
                "tol": None,
                "detail": record.get("error", ""),
            })

    total = len(passes) + len(failures)
    score = round(100.0 * len(passes) / total, 1) if total else 0.0
    return {"passes": passes, "failures": failures, "advisories": advisories, "score": score}


def _iter_check_blocks(payload: Any, prefix: str = ""):
    if not isinstance(payload, dict):
        return
    if isinstance(payload.get("checks"), dict):
        yield payload.get("subject", prefix or "record"), payload["checks"]
    for key, value in payload.items():
        if key == "checks":
            continue
        if isinstance(value, dict):
            yield from _iter_check_blocks(value, f"{prefix}.{key}" if prefix else key)
        elif isinstance(value, list):
            for i, item in enumerate(value):
                yield from _iter_check_blocks(item, f"{prefix or key}[{i}]")


def _number(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_number(v) for v in value) + "]"
    return str(value)


def _annotation(entry: Dict[str, Any]) -> str:
    """' (value v, tol t, detail)' with the parts that are present."""
    parts = []
    if entry.get("value") is not None:
        parts.append(f"value {_number(entry['value'])}")
    if entry.get("tol") is not None:
        parts.append(f"tol {_number(entry['tol'])}")
    if entry.get("detail"):
        parts.append(entry["detail"])
    return f" ({', '.join(parts)})" if parts else ""


def generate_check_summary(analysis: Dict[str, Any], title: Optional[str] = None) -> str:
    """Build the markdown summary written next to the run records."""
    lines = [f"# {title or 'Run summary'}", ""]
    lines.append(f"**Score:** {analysis['score']}% of checks passing "
                 f"({len(analysis['passes'])} passed, {len(analysis['failures'])} failed)")
    lines.append("")

    if analysis["failures"]:
        lines.append("## Failures")
        lines.append("")
        for f in analysis["failures"]:
            lines.append(f"- `{f['stage']}` / {f['subject']} / **{f['check']}**{_annotation(f)}")
        lines.append("")

    if analysis["passes"]:
        lines.append("## Passed")
        lines.append("")
        for p in analysis["passes"]:
            lines.append(f"- `{p['stage']}` / {p['subject']} / {p['check']}{_annotation(p)}")
        lines.append("")

    if analysis.get("advisories"):
        lines.append("## Advisory")
        lines.append("")
        for a in analysis["advisories"]:
            mark = "ok" if a["passed"] else "not met"
            lines.append(f"- `{a['stage']}` / {a['subject']} / {a['check']}: {mark}{_annotation(a)}")
        lines.append("")

    if not (analysis["passes"] or analysis["failures"] or analysis.get("advisories")):
        lines.append("No checks were recorded.")
        lines.append("")

    return "\n".join(lines)
