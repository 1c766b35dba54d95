import logging
import sys

import hydra
from dotenv import load_dotenv
from hydra.core.config_store import ConfigStore
from omegaconf import OmegaConf

from src.cli import EXIT_VERIFICATION_FAILED, exit_code, render, run
from src.utils import RunConfig, write_json

# Load environment variables from .env
load_dotenv()

# Configure logging with Hydra
# https://hydra.cc/docs/tutorials/basic/running_your_app/logging/
log = logging.getLogger(__name__)

cs = ConfigStore.instance()
cs.store(name="config_schema", node=RunConfig)


@hydra.main(version_base="1.3", config_path="config", config_name="config")
def run_command(cfg: RunConfig):
    """Run one command and write its report"""

    run_dir = hydra.core.hydra_config.HydraConfig.get().runtime.output_dir
    log.info(f"Running {cfg.command} in {run_dir}")

    try:
        cfg = OmegaConf.to_object(cfg)
        report = run(cfg)
    except Exception as e:
        code = exit_code(e)
        if code is None:
            raise
        log.error(f"{type(e).__name__}: {e}")
        sys.exit(code)

    report.seed = cfg.seed if report.seed is None else report.seed
    print(render(report, cfg.output.format))
    write_json(report.model_dump(mode="json"), cfg.paths.report_file)
    log.info(f"Report saved to {cfg.paths.report_file}")

    if not report.passed:
        log.error(f"{cfg.command.value} failed verification")
        sys.exit(EXIT_VERIFICATION_FAILED)

    log.info(f"{cfg.command.value} completed")


if __name__ == "__main__":
    run_command()
