"""Result downloads"""

import json

import streamlit as st

from ..utils.results import result_text
from ..utils.templates import EXCEL_SUPPORT, create_config_template, export_workbook


def create_export_section():
    """Download buttons for the last result and the config template"""
    st.header("📦 Export")
    result = st.session_state.last_result
    recipe = st.session_state.last_recipe

    if result is None:
        st.info("👆 Run a recipe to enable downloads")
    else:
        st.download_button(
            "⬇️ Result file (CSV)",
            data=result_text(result),
            file_name=f"{recipe}.csv",
            mime="text/csv",
            use_container_width=True,
        )
        if EXCEL_SUPPORT:
            st.download_button(
                "⬇️ Excel workbook",
                data=export_workbook(result),
                file_name=f"{recipe}.xlsx",
                mime="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
                use_container_width=True,
            )
        else:
            st.caption("Install openpyxl for Excel export")

        fits = result.metadata.get("fits") or {}
        if fits:
            st.download_button(
                "⬇️ Fit results (JSON)",
                data=json.dumps(fits, indent=2, sort_keys=True),
                file_name=f"{recipe}_fits.json",
                mime="application/json",
                use_container_width=True,
            )

    st.download_button(
        "⬇️ Config template (YAML)",
        data=create_config_template(),
        file_name="spincast.yaml",
        mime="text/yaml",
        use_container_width=True,
    )
