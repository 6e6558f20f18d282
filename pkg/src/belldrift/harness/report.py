"""CSV tables and optional SVG figures rendered from run records.

Every writer produces the same bytes for the same input. Figures are drawn
from the CSV rows only.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping

from ..contexts import CONTEXTS
from ..errors import BellDriftError
from ..stats import significance_stars

FLOAT_FORMAT = ".6g"

SCHEDULE_TABLE_FIELDS = ["Schedule", "S_r", "S_err", "delta_op(global)", "delta_ens", "delta_ens(observable)", "delta_sched"]
NO_SIGNALING_FIELDS = ["Dataset", "Version", "max_abs_dP", "min_p", "min_p_bonf"]
DRIFT_FIELDS = ["context", "delta_op", "null_mean", "null_std", "p_value", "stars"]
BINSCAN_FIELDS = [
    "B", "amplitude", "schedule", "observed", "observed_std", "null_mean", "null_std", "null_q99", "p_value", "stars",
]


class ReportError(BellDriftError, OSError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, FLOAT_FORMAT)
    return str(v)


def to_csv(rows: Iterable[Mapping], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in fields])
    return buf.getvalue()


def _write(text: str, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return path


def _as_dict(record) -> dict:
    return record if isinstance(record, Mapping) else record.content_dict()


def schedule_rows(records: Iterable) -> list[dict]:
    """One row per run: the quantities compared across schedules.

    ``delta_ens`` is the model's lambda-level divergence (blank for data
    without a model); ``delta_ens(observable)`` is the max TV between
    context-level outcome distributions restricted to shared marginals.
    """
    rows = []
    for rec in records:
        d = _as_dict(rec)
        chsh = d.get("chsh_mitigated") or d["chsh"]
        drift = d.get("drift_mitigated") or d["drift"]
        model = d.get("model") or {}
        rows.append(
            {
                "Schedule": d["exposure"]["schedule"],
                "S_r": chsh["S"],
                "S_err": chsh["S_err"],
                "delta_op(global)": drift["delta_op_global"],
                "delta_ens": model.get("delta_ens_lambda"),
                "delta_ens(observable)": d.get("observable_delta_ens"),
                "delta_sched": d["exposure"]["delta_sched"],
            }
        )
    return rows


def no_signaling_rows(datasets: Mapping[str, object]) -> list[dict]:
    """Rows for raw and (when present) mitigated no-signaling checks of each dataset."""
    rows = []
    for name, rec in datasets.items():
        d = _as_dict(rec)
        for version, key in (("raw", "no_signaling"), ("mitigated", "no_signaling_mitigated")):
            ns = d.get(key)
            if not ns:
                continue
            rows.append(
                {
                    "Dataset": name,
                    "Version": version,
                    "max_abs_dP": ns["max_abs_marginal_deviation"],
                    "min_p": ns["min_p"],
                    "min_p_bonf": ns["min_p_bonferroni"],
                }
            )
    return rows


def _context_order(c: str):
    return (CONTEXTS.index(c), c) if c in CONTEXTS else (len(CONTEXTS), c)


def drift_rows(record) -> list[dict]:
    d = _as_dict(record)
    drift = d.get("drift_mitigated") or d["drift"]
    rows = [
        {
            "context": c,
            "delta_op": drift["delta_op"][c],
            "null_mean": drift["null_mean"][c] if drift.get("null_mean") else None,
            "null_std": drift["null_std"][c] if drift.get("null_std") else None,
            "p_value": drift["p_value"][c] if drift.get("p_value") else None,
            "stars": significance_stars(drift["p_value"][c]) if drift.get("p_value") else "",
        }
        for c in sorted(drift["delta_op"], key=_context_order)
    ]
    g = drift.get("p_value_global")
    rows.append(
        {
            "context": "global",
            "delta_op": drift["delta_op_global"],
            "null_mean": drift.get("null_mean_global"),
            "null_std": drift.get("null_std_global"),
            "p_value": g,
            "stars": significance_stars(g) if g is not None else "",
        }
    )
    return rows


def write_schedule_table(records: Iterable, path) -> Path:
    return _write(to_csv(schedule_rows(records), SCHEDULE_TABLE_FIELDS), path)


def write_no_signaling_table(datasets: Mapping[str, object], path) -> Path:
    return _write(to_csv(no_signaling_rows(datasets), NO_SIGNALING_FIELDS), path)


def write_drift_table(record, path) -> Path:
    return _write(to_csv(drift_rows(record), DRIFT_FIELDS), path)


def write_binscan_table(rows: Iterable[Mapping], path) -> Path:
    return _write(to_csv(rows, BINSCAN_FIELDS), path)


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def binscan_svg(rows: Iterable[Mapping], path) -> Path:
    """Observed vs null bars with significance stars, one panel per (amplitude, schedule).

    Needs matplotlib. Output is byte-stable (fixed hash salt, no date).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [dict(r) for r in rows]
    keys = sorted({(float(r["amplitude"]), str(r["schedule"])) for r in rows})
    with matplotlib.rc_context({"svg.hashsalt": "belldrift", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3.0), squeeze=False)
        for ax, (amp, sched) in zip(axes[0], keys):
            sub = sorted((r for r in rows if float(r["amplitude"]) == amp and str(r["schedule"]) == sched),
                         key=lambda r: int(r["B"]))
            bs = [int(r["B"]) for r in sub]
            x = range(len(bs))
            obs = [float(r["observed"]) for r in sub]
            nm = [float(r["null_mean"]) for r in sub]
            ns = [float(r["null_std"]) for r in sub]
            os_ = [float(r["observed_std"]) if r.get("observed_std") not in (None, "") else 0.0 for r in sub]
            ax.bar([i - 0.2 for i in x], obs, 0.4, yerr=os_, label="observed", color="#3b6ea5")
            ax.bar([i + 0.2 for i in x], nm, 0.4, yerr=ns, label="null", color="#bbbbbb")
            for i, r in zip(x, sub):
                if r.get("stars"):
                    ax.text(i - 0.2, obs[i] + os_[i], r["stars"], ha="center", va="bottom", fontsize=8)
            ax.set_xticks(list(x))
            ax.set_xticklabels([str(b) for b in bs])
            ax.set_xlabel("B")
            ax.set_title(f"{sched}, amplitude {amp:g}", fontsize=9)
        axes[0][0].set_ylabel("delta_op (global)")
        axes[0][0].legend(fontsize=7)
        fig.tight_layout()
        path = Path(path)
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from exc
        finally:
            plt.close(fig)
    return path
