"""Sidebar parameter panel"""

import streamlit as st

from ..utils.session import widget_key


def _number(label, section, name, help=None, fmt="%.4g", step=None):
    return st.number_input(label, key=widget_key(section, name), help=help, format=fmt, step=step)


def create_sidebar():
    """Create the parameter panel and return the config updates it implies"""
    with st.sidebar:
        updates = {}

        st.header("🧲 Spin Hamiltonian")
        updates["zfs"] = {
            "D": _number("D (MHz)", "zfs", "D", fmt="%.1f"),
            "E": _number("E (MHz)", "zfs", "E", help="Must stay below |D| for a level anticrossing", fmt="%.1f"),
            "gamma_e": _number("γe (MHz/mT)", "zfs", "gamma_e", fmt="%.2f"),
        }

        st.header("💡 Photodynamics")
        col1, col2 = st.columns(2)
        with col1:
            tau_0 = _number("τ0 (µs)", "rates", "tau_0")
            tau_plus = _number("τ+ (µs)", "rates", "tau_plus")
            tau_minus = _number("τ− (µs)", "rates", "tau_minus")
        with col2:
            k_isc = _number("k_isc (1/µs)", "rates", "k_isc")
            pump = _number("Pump (1/µs/µW)", "rates", "pump_coeff")
            detrap = _number("Detrap (1/µs/µW)", "rates", "detrap_coeff")
        updates["rates"] = {
            "tau_0": tau_0,
            "tau_plus": tau_plus,
            "tau_minus": tau_minus,
            "k_isc": k_isc,
            "pump_coeff": pump,
            "detrap_coeff": detrap,
        }
        updates["laser"] = {"power": _number("Laser power (µW)", "laser", "power", fmt="%.1f")}

        st.header("🌀 Coherence")
        updates["coherence"] = {
            "t2_star": _number("T2* (µs)", "coherence", "t2_star"),
            "gamma_phi_dyn": _number("γφ (1/µs)", "coherence", "gamma_phi_dyn"),
            "pi_half_ns": _number("π/2 pulse (ns)", "coherence", "pi_half_ns", fmt="%.2f"),
            "ideal_pulses": st.checkbox("Ideal pulses", key=widget_key("coherence", "ideal_pulses")),
        }

        st.header("🧭 Field")
        updates["field"] = {
            "magnitude": _number(
                "|B| (mT)", "field", "magnitude", help="Used by TRPL and temperature runs", fmt="%.2f"
            ),
            "misalignment_deg": _number("Misalignment (deg)", "field", "misalignment_deg", fmt="%.2f"),
        }
        updates["lac"] = {
            "misalignment_deg": _number("LAC misalignment (deg)", "lac", "misalignment_deg", fmt="%.2f")
        }

        st.header("⚙️ Execution")
        updates["workers"] = st.number_input("Worker processes", min_value=1, max_value=32, step=1, key="workers")

    return updates
