"""Control and simulation stack for a non-contact cold-sensation display.

Cooling comes from a continuously blown cold-air jet, warming from a
switchable radiant LED array; alternating the two on the same skin patch
presents persistent cold while the skin temperature barely moves.  The
package compiles stimulus patterns into actuator duty timelines,
calibrates duty-to-rate models against a simulated skin plant, and runs
and analyzes perception studies with synthetic participants.
"""

from .errors import (CalibrationError, DegenerateDesignError,
                     UnreachableRateError, ValidationError, WrongKindError)
from .pattern import (DerivedPattern, RateSchedule, Segment, SpecIssue,
                      StimulusSpec, compile_schedule, derive_pattern,
                      validate_spec)
from .plant import (LedLayout, PlantParams, PlantState, SensorReading,
                    SkinPlant, Trace, led_positions, load_plant_config,
                    read_sensor, save_plant_config, step)
from .control import (ActuatorTimeline, CalibrationPoint, CalibrationProtocol,
                      CalibrationResult, DutyModel, PwmWaveform,
                      apply_drift_correction, calibrate, exact_models,
                      fit_duty_model, invert_duty, load_models, mean_rate,
                      pwm_waveform, run_control, schedule_to_timeline)
from .stats import (TestResult, benjamini_hochberg, chi_square_sf,
                    kruskal_wallis, wilcoxon_rank_sum)
from .experiment import (ExperimentPlan, ParticipantModel, SliderTrace,
                         TrialRecord, analyze_exp2, analyze_exp3,
                         build_exp2_plan, build_exp3_plan, confidence_of_cold,
                         default_participants, persistence, run_experiment,
                         run_pipeline, simulate_participant)

__version__ = "0.1.0"
