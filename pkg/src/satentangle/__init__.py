"""Simulation of satellite-to-ground entanglement distribution over two downlinks.

Modules
-------
geometry     pass geometry for a circular orbit over two ground stations
linkbudget   per-link attenuation and the fiber comparison
calibration  fitting the ground track and link efficiencies to a pass envelope
quantum      two-qubit states, waveplate compensation, analyzer probabilities
eventsim     Monte Carlo time tags for both stations
timesync     clock recovery and coincidence matching
estimators   CHSH, visibility and fidelity bound from counts
spacetime    light-cone separation of setting and measurement events
scenario     versioned JSON experiment descriptions
pipeline     end-to-end wiring used by the command line
"""

__version__ = "0.1.0"
