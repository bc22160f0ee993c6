//! Topic registry of the twin.

pub const CRANE_STATE: &str = "crane/state";
pub const RUN_STARTED: &str = "crane/run/started";
pub const RUN_COMPLETED: &str = "crane/run/completed";
pub const TRAJECTORY_REQUEST: &str = "dt/trajectory/request";
pub const TRAJECTORY_RESULT: &str = "dt/trajectory/result";
pub const SIMULATION_REQUEST: &str = "dt/simulation/request";
pub const SIMULATION_RESULT: &str = "dt/simulation/result";
pub const VALIDATION_REPORT: &str = "dt/validation/report";
pub const VALIDATION_ALERT: &str = "dt/validation/alert";

pub const ALL: [&str; 9] = [
    CRANE_STATE,
    RUN_STARTED,
    RUN_COMPLETED,
    TRAJECTORY_REQUEST,
    TRAJECTORY_RESULT,
    SIMULATION_REQUEST,
    SIMULATION_RESULT,
    VALIDATION_REPORT,
    VALIDATION_ALERT,
];
