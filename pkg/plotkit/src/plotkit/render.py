"""Rendering: one recipe in, one PNG plus one SVG out."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .recipes import FigureRecipe, collect

#: config lines shown in the caption box (keep images self-describing)
_CAPTION_KEYS = ("config.atom.omega_R_MHz", "config.atom.omega_M_MHz",
                 "config.atom.gamma_r_MHz", "config.atom.kappa_MHz",
                 "config.geometry.N", "config.run.t_end_us")


def _caption(meta: dict) -> str:
    parts = [f"{key.split('config.')[-1]}={meta[key]}" for key in _CAPTION_KEYS if key in meta]
    return ", ".join(parts)


def _save(fig, out: Path) -> list:
    out.parent.mkdir(parents=True, exist_ok=True)
    png = out.with_suffix(".png")
    svg = out.with_suffix(".svg")
    fig.savefig(png, dpi=150)
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)
    return [png, svg]


def render(recipe: FigureRecipe) -> list:
    """Render a recipe; returns the written file paths (PNG and SVG)."""
    series, meta = collect(recipe)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))

    if recipe.figure == "fig2":
        for name, s in series.items():
            if name == "fig2_sqrt10":
                continue
            ax.plot(s.columns["time_us"], s.columns["P_D"],
                    label=f"N = {name.split('N')[-1]}")
        overlay = series["fig2_sqrt10"]
        ax.plot(overlay.columns["time_us"], overlay.columns["P_D"], "k--",
                label="single atom, sqrt(10) drive")
        ax.set_xlabel("time (us)")
        ax.set_ylabel("dark-state population")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize=7, ncol=2)

    elif recipe.figure == "fig2-inset":
        s = next(iter(series.values()))
        x = s.columns["V_rs_MHz"]
        ax.plot(x, s.columns["P_D_tau"], "o-", label="dark-state population")
        ax.plot(x, s.columns["purity_tau"], "s--", label="purity")
        ax.set_xscale("symlog", linthresh=1.0)
        ax.set_xlabel("V_rs / 2pi (MHz)")
        ax.set_ylabel("value at tau")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize=8)

    elif recipe.figure == "fig3":
        omegas = {key.split(".")[-1]: value for key, value in meta.items()
                  if ".omega_E_MHz." in key}
        for name, s in series.items():
            tag = name.split("_")[-1]
            label = f"omega_E/2pi = {float(omegas[tag]):.2f} MHz" if tag in omegas else tag
            ax.plot(s.columns["time_us"], s.columns["P_D"], label=label)
        ax.set_xlabel("time (us)")
        ax.set_ylabel("dark-state population")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize=8)

    else:  # fig4
        markers = ("s", "o", "^", "v")
        for marker, (name, s) in zip(markers, sorted(series.items())):
            sep = s.columns["separation_um"][0]
            ax.plot(s.columns["V_rs_MHz"], s.columns["P_D_tau"], marker + "-",
                    label=f"separation {sep:g} um")
        ax.set_xscale("symlog", linthresh=1.0)
        ax.set_xlabel("V_rs / 2pi (MHz)")
        ax.set_ylabel("dark-state population at tau")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize=8)

    ax.grid(True, alpha=0.3)
    caption = _caption(meta)
    if caption:
        fig.text(0.01, 0.01, caption, fontsize=6, color="0.35")
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    return _save(fig, recipe.out)
