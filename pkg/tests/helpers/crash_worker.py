"""Run one slowed-down job in a separate process so the parent test can kill
it mid-run and verify restart recovery. Prints the job id on stdout."""

import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent.parent
sys.path.insert(0, str(REPO / "src"))

from wheatai.jobs import DirectoryImageSource, JobEngine, JobSpec  # noqa: E402


def main() -> None:
    data_dir, images_dir, preds_dir = sys.argv[1:4]

    original = JobEngine._run_one_image

    def slowed(self, pipeline_id, params, backend, image_id):
        time.sleep(0.25)
        return original(self, pipeline_id, params, backend, image_id)

    JobEngine._run_one_image = slowed

    source = DirectoryImageSource(images_dir)
    engine = JobEngine(data_dir, source, workers=1)
    job_id = engine.submit(JobSpec("fdk", tuple(source.list_ids()), {}, preds_dir))
    print(job_id, flush=True)
    engine.start()
    time.sleep(60)  # parent kills us long before this


if __name__ == "__main__":
    main()
