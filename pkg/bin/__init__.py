# This file makes the bin directory a Python package
# (the ring synthesis modules are imported as bin.<module>)
