"""Recipe selection, execution and result display"""

import json
import tempfile

import streamlit as st

from ..config import DISPLAY_HINTS, RECIPES
from ..core.errors import ConfigError, DomainError, FitError, ResultFileError
from ..core.parsers import config_from_mapping
from ..recipes import run_experiment
from ..utils.results import from_experiment

RECIPE_HELP = {
    "odmr": "ODMR contrast vs MW frequency",
    "trpl-diff": "Differential TRPL ΔS_B vs dark delay",
    "contrast-map": "ODMR contrast over the waits before and after the MW pulse",
    "field-split": "Line positions of each orientation family vs field",
    "lac-sweep": "PL change near the level anticrossing",
    "rabi": "Rabi oscillation vs pulse length",
    "coherence": "Ramsey, echo or CPMG decay",
    "lifetime-diff": "S2 − S1 after a π pulse on one transition",
    "fit": "Fit a column of an uploaded result file",
    "power-scan": "Readout overshoot vs laser power",
    "temperature": "ΔS_B maximum vs temperature",
}


def _fit_updates():
    uploaded = st.file_uploader("Result file to fit", type=["csv", "txt"])
    if uploaded is None:
        return None
    with tempfile.NamedTemporaryFile("wb", suffix=".csv", delete=False) as handle:
        handle.write(uploaded.getvalue())
    model = st.selectbox(
        "Model",
        ["biexp_diff", "monoexp", "lorentzian", "lifetime_diff", "arrhenius_amplitude", "damped_sinusoid"],
    )
    init_text = st.text_input("Initial parameters (JSON list, blank to guess)", "")
    updates = {"fit": {"input": handle.name, "model": model}}
    if init_text.strip():
        updates["fit"]["init"] = json.loads(init_text)
    return updates


def create_runner_section(updates):
    """Recipe picker and run button; stores the result in session state"""
    st.header("🧪 Experiment")
    recipe = st.selectbox("Recipe", RECIPES, format_func=lambda r: f"{r}: {RECIPE_HELP[r]}")

    if recipe == "fit":
        fit_updates = _fit_updates()
        if fit_updates is None:
            st.info("👆 Upload a result file to fit")
            return
        updates = {**updates, **fit_updates}

    if st.button("▶️ Run", type="primary", use_container_width=True):
        with st.spinner(f"Running {recipe}..."):
            try:
                config = config_from_mapping(updates)
                experiment = run_experiment(recipe, config)
                st.session_state.last_experiment = experiment
                st.session_state.last_result = from_experiment(experiment, recipe, config.hash)
                st.session_state.last_recipe = recipe
            except ConfigError as exc:
                st.error(f"Configuration error: {exc}")
            except (DomainError, FitError, ResultFileError, json.JSONDecodeError) as exc:
                st.error(f"Run failed: {exc}")

    _show_result()


def _show_result():
    result = st.session_state.last_result
    if result is None:
        return
    experiment = st.session_state.last_experiment

    st.subheader(f"📈 {st.session_state.last_recipe}")
    frame = result.data.copy()
    labels = []
    for column in result.columns:
        base = next((b for b in DISPLAY_HINTS if column.startswith(b)), None)
        if base and DISPLAY_HINTS[base] == "percent":
            frame[column] = 100.0 * frame[column]
            labels.append(f"{column} [%]")
        else:
            labels.append(f"{column} [{result.units[column]}]")
    frame.columns = labels

    chart = frame.set_index(frame.columns[0])
    signal_columns = [c for c in chart.columns if c.startswith(experiment.signal_name)]
    st.line_chart(chart[signal_columns])
    st.dataframe(frame, use_container_width=True)

    if result.metadata.get("summary"):
        st.json(result.metadata["summary"])
    for name, fit in experiment.fits.items():
        status = "✅ converged" if fit.converged else f"⚠️ not converged ({fit.message})"
        st.markdown(f"**{name}** {status}")
        st.table({n: [f"{v:.6g} ± {e:.2g}"] for n, v, e in zip(fit.names, fit.values, fit.errors)})

    if st.button("Clear result"):
        st.session_state.last_result = None
        st.session_state.last_experiment = None
        st.rerun()
