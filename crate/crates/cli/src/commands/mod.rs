pub mod calibrate;
pub mod report;
pub mod run;
pub mod simulate;

pub use calibrate::cmd_calibrate;
pub use report::cmd_report;
pub use run::cmd_run;
pub use simulate::cmd_simulate;
