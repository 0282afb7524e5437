"""Config template and spreadsheet export utilities"""

import io

import pandas as pd
import yaml

from ..config import DEFAULT_PROFILE, DEFAULTS, UNITS

# Check if openpyxl is available
try:
    import openpyxl  # noqa: F401

    EXCEL_SUPPORT = True
except ImportError:
    EXCEL_SUPPORT = False

SECTION_NOTES = {
    "zfs": "Zero-field splitting D, E (MHz) and gyromagnetic ratio gamma_e (MHz/mT)",
    "rates": "Optical and metastable rates: lifetimes in us, k_isc in 1/us, coefficients per uW",
    "coherence": "Dephasing: t2_star and rabi_decay in us, gamma_phi_dyn in 1/us, pi_half_ns in ns",
    "field": "Static field magnitude (mT) used where a recipe field is null, lab direction and misalignment (deg)",
    "laser": "Readout pulse power (uW), length and window (us)",
    "odmr": "ODMR sweep (MHz), MW pulse (ns), waits t_a, t_b (us) and field (mT)",
    "trpl": "Differential TRPL delays (us) and the applied field (mT); null uses field.magnitude",
    "contrast_map": "Waits before and after the MW pulse (us)",
    "field_split": "Field sweep (mT) along the field direction",
    "lac": "Field sweep (mT) near the level anticrossing",
    "rabi": "Pulse durations (us) and optional MW powers",
    "protocol": "Ramsey, echo or CPMG; free evolution times in us",
    "lifetime": "Dark delays (us) after a pi or 2pi pulse",
    "temperature": "Lifetime tables vs temperature (K) and the quench activation energy (meV)",
    "power_scan": "Laser powers (uW) for the readout overshoot scan",
    "fit": "Fit a column of an existing result file",
    "output": "Output path and optional fit JSON",
}


def create_config_template() -> str:
    """Commented YAML of the bundled defaults profile"""
    lines = [
        f"# SpinCast configuration ({DEFAULT_PROFILE})",
        "# Units: " + ", ".join(f"{k} {v}" for k, v in UNITS.items()),
        "# Sweeps take either {start, stop, step} (stop inclusive) or an explicit list.",
        "",
    ]
    for section, value in DEFAULTS.items():
        if section in SECTION_NOTES:
            lines.append(f"# {SECTION_NOTES[section]}")
        lines.append(yaml.safe_dump({section: value}, sort_keys=False, default_flow_style=None).rstrip())
        lines.append("")
    return "\n".join(lines)


def export_workbook(result) -> bytes:
    """Excel workbook with a Data sheet and a Metadata sheet; None without openpyxl"""
    if not EXCEL_SUPPORT:
        return None

    output = io.BytesIO()
    data = result.data.copy()
    data.columns = result.header_names()
    metadata = pd.DataFrame(
        {"key": list(result.metadata), "value": [str(v) for v in result.metadata.values()]}
    )

    with pd.ExcelWriter(output, engine="openpyxl") as writer:
        data.to_excel(writer, sheet_name="Data", index=False)
        metadata.to_excel(writer, sheet_name="Metadata", index=False)

        # Auto-adjust column widths
        for worksheet in writer.sheets.values():
            for column in worksheet.columns:
                width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
                worksheet.column_dimensions[column[0].column_letter].width = min(width + 2, 40)

    output.seek(0)
    return output.getvalue()
