import os, json
import logging
from dotenv import load_dotenv

load_dotenv()

def parse_int_list(raw: str) -> list[int]:
    """
    Convert SAP_EXPERIMENT_SEEDS to list.
    Accepts a JSON list ("[1, 2, 3]") or a comma separated string ("1,2,3").
    """

    if not raw:
        return []
    raw = raw.strip()

    # JSON list format
    if raw.startswith("["):
        try:
            values = json.loads(raw)
            return [int(x) for x in values]
        except Exception:
            pass

    return [int(x.strip().strip('"').strip("'")) for x in raw.split(",") if x.strip()]


WORKERS = int(os.getenv("SAP_WORKERS", "1"))
LOG_LEVEL = os.getenv("SAP_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("SAP_OUTPUT_DIR", "output")

LASSO_TOL = float(os.getenv("SAP_LASSO_TOL", "1e-8"))
LASSO_MAX_SWEEPS = int(os.getenv("SAP_LASSO_MAX_SWEEPS", "1000"))

SYM_TOL = float(os.getenv("SAP_SYM_TOL", "1e-10"))
SYLVESTER_TOL = float(os.getenv("SAP_SYLVESTER_TOL", "1e-12"))
DENSE_EIG_LIMIT = int(os.getenv("SAP_DENSE_EIG_LIMIT", "5000"))

EXPERIMENT_SEEDS = parse_int_list(os.getenv("SAP_EXPERIMENT_SEEDS", "1,2,3,4,5"))


def configure_logging(level: str | None = None) -> None:
    """Install one stream handler with the bracketed tag format used across the app."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_sap_handler", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
    handler._sap_handler = True
    root.addHandler(handler)
    root.setLevel((level or LOG_LEVEL).upper())
