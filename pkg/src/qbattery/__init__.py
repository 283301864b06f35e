"""Storage-state taxonomy and charging dynamics for interacting multilevel quantum batteries."""

from .charge import ControlAnsatz, TargetReport, optimize_drive, scalable_pipeline, storage_figure_of_merit
from .davies import (DaviesModel, EigenSystem, JumpOperator, RateFunction, build_model, dissipator,
                     flux_matrix, jump_operators, spectral_decompose)
from .dynamics import (DriveEnvelope, SimulationConfig, Trajectory, evolve, fidelity, rhs,
                       stored_energy, validate_drive)
from .msclass import (StateClass, analytic_two_qutrit, build_block, classify, classify_model,
                      effective_decay_rate,
                      ms_decompose, spectator_eigenstate_deviation, stored_energy_of_state)
from .qsys import (QuditSpec, SystemSpec, collective_lowering, drive_hamiltonian, embed,
                   excitation_number, local_energies, lowering_op, system_hamiltonian)

__version__ = "0.1.0"
