//! Library half of the experiment CLI: config parsing, subcommand drivers,
//! report schema, and SVG rendering. The binary in main.rs is a thin shell
//! over these so integration tests can call everything in-process.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use flowmatch::Error;

/// 0 success, 2 config/parse, 3 runtime or numeric, 4 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::Shape(_) | Error::Domain(_) | Error::Parse { .. } => 2,
        Error::Io(_) => 4,
        Error::Csv(e) => {
            if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                4
            } else {
                2
            }
        }
        Error::Json(_) => 2,
        _ => 3,
    }
}
