//! Text report for `ajsim validate`.

use std::fmt::Write as _;

use ajsim_core::{regime_check, MomentBranch};

use crate::config::{ExperimentConfig, Task};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Hypothesis fails and the configured task relies on it.
    Warn,
    /// Hypothesis fails but nothing configured relies on it.
    Info,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub condition: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub task: Option<Task>,
    pub p: f64,
    pub checks: Vec<CheckLine>,
}

impl ValidationReport {
    pub fn warnings(&self) -> impl Iterator<Item = &CheckLine> {
        self.checks.iter().filter(|c| c.status == Status::Warn)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        match self.task {
            Some(t) => writeln!(s, "config ok for task `{}`", t.name()),
            None => writeln!(s, "config ok (no task set)"),
        }
        .expect("write to String");
        writeln!(s, "regime checks (p = {}):", self.p).expect("write to String");
        for c in &self.checks {
            let tag = match c.status {
                Status::Ok => "ok  ",
                Status::Warn => "WARN",
                Status::Info => "--  ",
            };
            writeln!(s, "  [{tag}] {}: {}", c.name, c.condition).expect("write to String");
        }
        let n = self.warnings().count();
        if n == 0 {
            writeln!(s, "no warnings").expect("write to String");
        } else {
            writeln!(s, "{n} warning(s): the estimators still run, but the bounds they probe are not guaranteed")
                .expect("write to String");
        }
        s
    }
}

/// Validates `cfg` (hard errors fail) and evaluates every regime inequality.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    if let Some(t) = cfg.task {
        cfg.validate(t)?;
    } else {
        cfg.model
            .validate()
            .map_err(|e| crate::error::CliError::from_sim("model", e))?;
    }
    let moments = cfg.moments.as_ref();
    let p = moments.map(|m| m.p).filter(|&p| p >= 2.0).unwrap_or(2.0);
    let wants_inverse = moments.is_some_and(|m| m.p < 0.0);
    let wants_time_avg = moments.is_some_and(|m| m.time_average.is_some() || m.theta.is_some());
    let wants_pathwise = cfg.task == Some(Task::Asymptotics);
    let r = regime_check(&cfg.model, p);

    let status = |ok: bool, relied_on: bool| match (ok, relied_on) {
        (true, _) => Status::Ok,
        (false, true) => Status::Warn,
        (false, false) => Status::Info,
    };
    let branch = match r.moment_branch {
        MomentBranch::Strict => "holds with 2rho < gamma+1".to_string(),
        MomentBranch::Boundary => format!("holds on 2rho = gamma+1 with a2 > (p-1)sigma^2/2 = {}", (p - 1.0) * cfg.model.sigma.powi(2) / 2.0),
        MomentBranch::Violated => format!(
            "requires 2rho < gamma+1, or 2rho = gamma+1 with a2 > (p-1)sigma^2/2; got 2rho = {}, gamma+1 = {}",
            2.0 * cfg.model.rho,
            cfg.model.gamma + 1.0
        ),
    };
    let checks = vec![
        CheckLine {
            name: "moment bound",
            condition: branch,
            status: status(r.moment_ok(), !wants_inverse),
        },
        CheckLine {
            name: "second-moment bound",
            condition: "requires 2rho <= gamma+1, with 2a2 > sigma^2 on equality".into(),
            status: status(r.second_moment_corollary_ok, !wants_inverse),
        },
        CheckLine {
            name: "inverse moment bound",
            condition: "requires 2rho <= gamma+1 and gamma <= 2".into(),
            status: status(r.inverse_moment_ok, wants_inverse),
        },
        CheckLine {
            name: "pathwise lower growth",
            condition: "requires 1 < rho <= 1.5 and 1 < gamma <= 2".into(),
            status: status(r.pathwise_lower_ok, wants_pathwise),
        },
        CheckLine {
            name: "pathwise upper growth",
            condition: "requires 2rho < gamma+1 and gamma <= 2".into(),
            status: status(r.pathwise_upper_ok, wants_pathwise),
        },
        CheckLine {
            name: "time-averaged moments",
            condition: "requires rho > 1.5".into(),
            status: status(r.time_avg_ok, wants_time_avg),
        },
    ];
    Ok(ValidationReport {
        task: cfg.task,
        p,
        checks,
    })
}
