"""Allow running the package as a module: python -m moire_sensor_sim"""

from moire_sensor_sim.cli import main

if __name__ == "__main__":
    main()
