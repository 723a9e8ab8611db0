"""Report figures for score runs: metric bars plus a conclusion confusion matrix."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .metrics import EvalReport, StudyScore
from .outcomes import Conclusion

_LABELS = (Conclusion.FAVORS_INTERVENTION, Conclusion.FAVORS_COMPARATOR,
           Conclusion.INCONCLUSIVE, Conclusion.NOT_ESTIMABLE)


def render_score_figure(report: EvalReport, scores: Sequence[StudyScore],
                        path: str | Path) -> None:
    """Render a two-panel summary figure to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = ("accuracy", "f1", "em", "em_at_1", "eir")
    values = [getattr(report, name) for name in names]

    fig, (ax_bars, ax_conf) = plt.subplots(1, 2, figsize=(10.5, 4.2))
    bars = ax_bars.bar(range(len(names)), values, color="#35618f")
    ax_bars.set_xticks(range(len(names)))
    ax_bars.set_xticklabels(names, rotation=20)
    ax_bars.set_ylim(0.0, 1.05)
    ax_bars.set_title(f"summary over {report.n_studies} studies "
                      f"(mse {report.mse:.4f})")
    for bar, value in zip(bars, values):
        ax_bars.annotate(f"{value:.3f}", (bar.get_x() + bar.get_width() / 2, value),
                         ha="center", va="bottom", fontsize=8)

    counts = [[sum(1 for s in scores
                   if s.gold_conclusion is gold and s.pred_conclusion is pred)
               for pred in _LABELS] for gold in _LABELS]
    image = ax_conf.imshow(counts, cmap="Blues")
    ax_conf.set_xticks(range(len(_LABELS)))
    ax_conf.set_yticks(range(len(_LABELS)))
    ax_conf.set_xticklabels([l.display for l in _LABELS], rotation=30,
                            ha="right", fontsize=8)
    ax_conf.set_yticklabels([l.display for l in _LABELS], fontsize=8)
    ax_conf.set_xlabel("predicted")
    ax_conf.set_ylabel("gold")
    ax_conf.set_title("conclusions")
    for i in range(len(_LABELS)):
        for j in range(len(_LABELS)):
            ax_conf.annotate(str(counts[i][j]), (j, i), ha="center", va="center",
                             fontsize=8)
    fig.colorbar(image, ax=ax_conf, shrink=0.8)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
