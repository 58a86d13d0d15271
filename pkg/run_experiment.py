import sys

from glm_subsampling.cli.main import main

if __name__ == '__main__':
    # e.g. python run_experiment.py simulate configs/desk_mznormal.cfg
    sys.exit(main())
