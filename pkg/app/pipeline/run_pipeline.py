import asyncio
import sys

from app.pipeline.pipeline import main
from app.utils.config import configure_logging

if __name__ == "__main__":
    configure_logging()
    asyncio.run(main(suite=sys.argv[1] if len(sys.argv) > 1 else "ablation"))
