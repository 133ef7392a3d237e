"""Ferroelectric tunnel junction compact model and integrate-and-fire neuron simulator."""

from .circuit import (CircuitConfig, MosfetParams, NeuronSimulator, SimTrace, SimulationError,
                      SweepResult, inverter_output, mosfet_current, run_neuron,
                      sweep_pulses_to_fire, switching_threshold)
from .device import (Currents, DeviceTrace, FtjDevice, FtjParams, FtjState,
                     asymptotic_polarization, delta_broadening, leakage_current,
                     polarization_current, reversal_rescale, step, tau_pe, update_polarization)
from .waveforms import (DriveSchedule, Phase, PulseSpec, concat, pulse_train, pund_sequence,
                        triangular_pulse)

__version__ = "0.1.0"

__all__ = [
    "CircuitConfig", "Currents", "DeviceTrace", "DriveSchedule", "FtjDevice", "FtjParams",
    "FtjState", "MosfetParams", "NeuronSimulator", "Phase", "PulseSpec", "SimTrace",
    "SimulationError", "SweepResult", "asymptotic_polarization", "concat", "delta_broadening",
    "inverter_output", "leakage_current", "mosfet_current", "polarization_current",
    "pulse_train", "pund_sequence", "reversal_rescale", "run_neuron", "step",
    "sweep_pulses_to_fire", "switching_threshold", "tau_pe", "triangular_pulse",
    "update_polarization",
]
