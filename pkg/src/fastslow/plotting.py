"""Optional figures written next to the CSV outputs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trajectory(times, states, names, path, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, name in enumerate(names):
            ax.plot(times, states[:, i], label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("concentration")
        if title:
            ax.set_title(title)
        ax.legend(ncol=2)
        return _save(fig, path)


def plot_convergence(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eps = report.eps
        ax.loglog(eps, report.sup_Mc_err, "o-", label="sup |Mc - Mc0|")
        ax.loglog(eps, report.l2_err, "s-", label="L2 error")
        ax.loglog(eps, report.fast_integral, "^-", label="fast integral")
        ax.set_xlabel("eps")
        ax.legend()
        return _save(fig, path)


def plot_integrands(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(report.times, report.velocity_integrand, label="R(c, v)")
        ax.plot(report.times, report.slow_integrand, label="slow slope")
        fast = np.asarray(report.fast_integrand, dtype=float)
        if np.all(np.isfinite(fast)) and np.any(fast):
            ax.plot(report.times, fast, label="fast slope")
        ax.set_xlabel("t")
        ax.set_ylabel("integrand")
        ax.legend()
        return _save(fig, path)


def plot_gap(eps, gaps, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(eps, gaps, "o-")
        ax.set_xlabel("eps")
        ax.set_ylabel("relative gap")
        return _save(fig, path)
