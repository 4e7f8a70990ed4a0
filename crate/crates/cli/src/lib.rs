//! Command-line front end for `swmor`: model files, Matrix Market import,
//! the reduction benchmark harness and the `swmor` subcommands.

pub mod bench;
pub mod cli;
pub mod modelfile;
pub mod mtx;

use swmor::LssError;

/// How a successful command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Results were produced but an iteration stopped before its tolerance.
    NotConverged,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Process exit code: 0 success, 2 non-convergence or divergence, 1 for
/// everything else (unreadable files, invalid or ill-posed models).
pub fn exit_code(result: &anyhow::Result<Status>) -> i32 {
    match result {
        Ok(Status::Done) => EXIT_OK,
        Ok(Status::NotConverged) => EXIT_NOT_CONVERGED,
        Err(e) => {
            let diverged = e.chain().any(|c| matches!(c.downcast_ref::<LssError>(), Some(LssError::Divergence { .. })));
            if diverged {
                EXIT_NOT_CONVERGED
            } else {
                EXIT_INPUT
            }
        }
    }
}
