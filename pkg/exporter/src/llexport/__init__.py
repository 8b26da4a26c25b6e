"""llexport: evaluate a pretrained generative model under bijective image
transforms and write llcache/1 likelihood files for the scoring toolkit.

The transform implementations here are independent of the scoring toolkit
and are pinned to it by a shared golden-vector file; export refuses to run
if any golden vector disagrees.
"""

__version__ = "0.1.0"
