"""Main Streamlit application entry point for SpinCast"""

import sys
from pathlib import Path

import streamlit as st

# Add spincast package to path
sys.path.append(str(Path(__file__).parent))

from spincast.ui.export import create_export_section
from spincast.ui.runner import create_runner_section
from spincast.ui.sidebar import create_sidebar
from spincast.utils.session import initialize_session_state


def main():
    st.set_page_config(page_title="SpinCast", page_icon="🧲", layout="wide")

    # Initialize session state
    initialize_session_state()

    st.title("🧲 SpinCast")
    st.subheader("Spin photodynamics of G-center ensembles")

    # Create sidebar
    updates = create_sidebar()

    col1, col2 = st.columns([3, 1])
    with col1:
        create_runner_section(updates)
    with col2:
        create_export_section()

    # Footer
    st.markdown("---")
    st.markdown("**SpinCast**: ODMR, TRPL, level anticrossing and coherence simulations with fits")


if __name__ == "__main__":
    main()
