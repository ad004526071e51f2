//! Uniform dispatch over the five solvers.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{self, GradOptions};
use crate::error::{Error, Result};
use crate::problem::{OrthogonalSet, ProblemInstance};
use crate::report::SolverReport;
use crate::sdp::{self, SdpOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Sdp,
    ClsPlus,
    LsPlus,
    Cls,
    Ls,
}

impl SolverKind {
    /// All solvers in reporting order.
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Sdp,
        SolverKind::ClsPlus,
        SolverKind::LsPlus,
        SolverKind::Cls,
        SolverKind::Ls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Sdp => "SDP",
            SolverKind::ClsPlus => "C-LS+",
            SolverKind::LsPlus => "LS+",
            SolverKind::Cls => "C-LS",
            SolverKind::Ls => "LS",
        }
    }

    pub fn run(
        self,
        inst: &ProblemInstance,
        opts: &SolverOptions,
    ) -> Result<(OrthogonalSet, SolverReport)> {
        Ok(match self {
            SolverKind::Sdp => sdp::recover(inst, &opts.sdp)?,
            SolverKind::Ls => baselines::solve_ls(inst),
            SolverKind::Cls => baselines::solve_cls(inst, &opts.grad),
            SolverKind::LsPlus => baselines::solve_lsplus(inst, &opts.grad),
            SolverKind::ClsPlus => baselines::solve_clsplus(inst, &opts.grad),
        })
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    /// Accepts the display names case-insensitively, plus `plus`/`p` spellings
    /// without `+` and without the dash (`clsplus`, `lsp`, ...).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect();
        let mut key = key.replace("plus", "+");
        if key != "sdp" && key.ends_with('p') {
            key.pop();
            key.push('+');
        }
        match key.as_str() {
            "sdp" => Ok(SolverKind::Sdp),
            "ls" => Ok(SolverKind::Ls),
            "cls" => Ok(SolverKind::Cls),
            "ls+" => Ok(SolverKind::LsPlus),
            "cls+" => Ok(SolverKind::ClsPlus),
            _ => Err(Error::UnknownSolver(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverOptions {
    pub sdp: SdpOptions,
    pub grad: GradOptions,
}
