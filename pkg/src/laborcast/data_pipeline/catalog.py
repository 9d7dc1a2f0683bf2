"""The ten sectors and the BLS series that feed each indicator column."""

from __future__ import annotations

from dataclasses import dataclass

INDICATORS: tuple[str, ...] = (
    "employees_k",
    "avg_hours",
    "avg_earnings",
    "unemp_rate",
    "openings_k",
    "hires_k",
    "separations_k",
)

INDICATOR_LABELS = {
    "employees_k": "Employees (K)",
    "avg_hours": "Avg Hours",
    "avg_earnings": "Avg Earnings ($)",
    "unemp_rate": "Unemp. Rate (%)",
    "openings_k": "Openings (K)",
    "hires_k": "Hires (K)",
    "separations_k": "Separations (K)",
}


@dataclass(frozen=True)
class Industry:
    slug: str
    name: str
    ces: str      # 8-digit CES supersector code
    cps: str      # CPS industry unemployment-rate series
    jolts: str    # 6-digit JOLTS industry code

    def series_ids(self) -> dict[str, str]:
        """Map each indicator column to its BLS series id."""
        jolts = f"JTS{self.jolts}000000000"
        return {
            "employees_k": f"CES{self.ces}01",
            "avg_hours": f"CES{self.ces}02",
            "avg_earnings": f"CES{self.ces}03",
            "unemp_rate": self.cps,
            "openings_k": f"{jolts}JOL",
            "hires_k": f"{jolts}HIL",
            "separations_k": f"{jolts}TSL",
        }


INDUSTRIES: tuple[Industry, ...] = (
    Industry("construction", "Construction", "20000000", "LNU04032231", "230000"),
    Industry("education_health", "Education and Health Services", "65000000", "LNU04032240", "600000"),
    Industry("financial", "Financial Activities", "55000000", "LNU04032238", "510099"),
    Industry("information", "Information", "50000000", "LNU04032237", "510000"),
    Industry("leisure_hospitality", "Leisure and Hospitality", "70000000", "LNU04032241", "700000"),
    Industry("manufacturing", "Manufacturing", "30000000", "LNU04032232", "300000"),
    Industry("natural_resources", "Natural Resources", "10000000", "LNU04032230", "110099"),
    Industry("other_services", "Other Services", "80000000", "LNU04032242", "810000"),
    Industry("professional_services", "Professional Services", "60000000", "LNU04032239", "540099"),
    Industry("transportation_utilities", "Transportation and Utilities", "40000000", "LNU04032236", "400000"),
)

_BY_KEY = {i.slug: i for i in INDUSTRIES} | {i.name.lower(): i for i in INDUSTRIES}


def get_industry(key: str) -> Industry:
    try:
        return _BY_KEY[key.strip().lower()]
    except KeyError:
        known = ", ".join(i.slug for i in INDUSTRIES)
        raise KeyError(f"unknown industry {key!r}; expected one of: {known}") from None
