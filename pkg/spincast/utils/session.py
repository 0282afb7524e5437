"""Session state management for Streamlit"""

import streamlit as st

from ..config import DEFAULTS

SEPARATOR = "__"


def widget_key(section: str, name: str) -> str:
    return f"{section}{SEPARATOR}{name}"


def initialize_session_state():
    """Seed widget keys from the defaults profile (scalars only)"""
    for section, values in DEFAULTS.items():
        if not isinstance(values, dict):
            if section not in st.session_state:
                st.session_state[section] = values
            continue
        for name, value in values.items():
            key = widget_key(section, name)
            if isinstance(value, (bool, int, float, str)) and key not in st.session_state:
                st.session_state[key] = value

    if "last_result" not in st.session_state:
        st.session_state.last_result = None
    if "last_experiment" not in st.session_state:
        st.session_state.last_experiment = None
    if "last_recipe" not in st.session_state:
        st.session_state.last_recipe = None
