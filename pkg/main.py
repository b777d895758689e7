"""
Skel2Sense

Main entry point: wrist accelerometer synthesis from skeleton poses,
trained jointly with an activity classifier.
"""

from cli.main import cli


if __name__ == "__main__":
    cli()
