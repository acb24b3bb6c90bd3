//! Experiment dispatch, verdicts and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use irk_spectral::harness::{
    conservation_run, convergence_study, dirichlet_compatibility_study, smoothness_probe,
    stability_growth, tangent_convergence_study, tangent_fd_check, ConvergenceReport, StabilityGrowth,
};
use irk_spectral::problems::ProblemKind;
use irk_spectral::tableau::ButcherTableau;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, Resolved};

/// What an experiment produced, before anything is written.
pub struct Outcome {
    pub pass: bool,
    pub verdict: String,
    pub result: Value,
    pub fitted_order: Option<f64>,
    pub reference: Option<Value>,
    /// `(file name, contents)`.
    pub csv: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct TableauSummary<'a> {
    label: &'a str,
    stages: usize,
    order: usize,
    fingerprint: String,
    a: Vec<Vec<f64>>,
    b: &'a [f64],
    c: &'a [f64],
}

impl<'a> TableauSummary<'a> {
    fn new(t: &'a ButcherTableau) -> Self {
        Self {
            label: t.label(),
            stages: t.stages(),
            order: t.order(),
            fingerprint: format!("{:016x}", t.fingerprint()),
            a: t.a_rows(),
            b: t.b(),
            c: t.c(),
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    experiment: &'static str,
    pass: bool,
    verdict: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    fitted_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<&'a Value>,
    artifacts: Vec<&'a str>,
    config: &'a ExperimentConfig,
    tableau: TableauSummary<'a>,
    result: &'a Value,
}

#[derive(Serialize)]
struct StabilityLevel {
    h: f64,
    n_steps: usize,
    #[serde(flatten)]
    growth: StabilityGrowth,
}

fn csv<F>(name: String, write: F) -> Result<(String, Vec<u8>)>
where
    F: FnOnce(&mut Vec<u8>) -> irk_spectral::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok((name, buf))
}

fn order_verdict(r: &ConvergenceReport, tol: f64) -> (bool, String) {
    let within = r.order_within(tol);
    let clean = !r.any_contaminated();
    let mut msg = format!(
        "fitted order {:.3}, declared {} (tol {tol:.3})",
        r.fitted_order, r.order
    );
    if !clean {
        msg.push_str(", some errors below 100 fp_tol");
    }
    (within && clean, msg)
}

pub fn execute(r: &Resolved) -> Result<Outcome> {
    let c = &r.config;
    let t = &r.tableau;
    let out = c.output.clone().expect("resolved");
    let opts = r.opts();
    let name = c.problem.as_deref().unwrap_or("wave-dirichlet");
    let head = format!("{} {name} {}", c.experiment.name(), t.label());
    let outcome = match c.experiment {
        Experiment::Convergence => {
            let p = r.problem();
            let u0 = c.initial.as_ref().expect("resolved").build(p, r.seed())?;
            let report = convergence_study(p, t, &u0, c.t_final.expect("resolved"), r.h_list(), &opts)?;
            let (pass, msg) = order_verdict(&report, r.order_tol());
            Outcome {
                pass,
                verdict: format!("{head}: {msg}"),
                fitted_order: Some(report.fitted_order),
                reference: Some(serde_json::to_value(&report.reference)?),
                csv: vec![csv(format!("{out}.csv"), |w| report.write_csv(w))?],
                result: serde_json::to_value(&report)?,
            }
        }
        Experiment::TangentCheck => {
            let p = r.problem();
            let u0 = c.initial.as_ref().expect("resolved").build(p, r.seed())?;
            let v0 = c.direction.as_ref().expect("resolved").build(p, r.seed().wrapping_add(1))?;
            let h0 = r.h_list()[0];
            let eps = c.eps.expect("resolved");
            let fd_tol = c.fd_tol.expect("resolved");
            let fd = tangent_fd_check(p, t, &u0, &v0, &r.solver(h0), eps)?;
            let report =
                tangent_convergence_study(p, t, &u0, &v0, c.t_final.expect("resolved"), r.h_list(), &opts)?;
            let (order_ok, msg) = order_verdict(&report, r.order_tol());
            let fd_ok = fd.relative_error <= fd_tol;
            Outcome {
                pass: order_ok && fd_ok,
                verdict: format!(
                    "{head}: finite-difference error {:.2e} (tol {fd_tol:.0e}), {msg}",
                    fd.relative_error
                ),
                fitted_order: Some(report.fitted_order),
                reference: Some(serde_json::to_value(&report.reference)?),
                csv: vec![csv(format!("{out}.csv"), |w| report.write_csv(w))?],
                result: json!({ "finite_difference": fd, "study": report }),
            }
        }
        Experiment::DirichletCompat => {
            let cmp = dirichlet_compatibility_study(
                t,
                c.t_final.expect("resolved"),
                r.h_list(),
                c.n,
                &opts,
            )?;
            let (full, msg) = order_verdict(&cmp.compatible, r.order_tol());
            let reduced = cmp.incompatible.fitted_order <= t.order() as f64 - 0.5;
            Outcome {
                pass: full && reduced,
                verdict: format!(
                    "{head}: compatible {msg}; incompatible fitted order {:.3} (needs <= {:.1})",
                    cmp.incompatible.fitted_order,
                    t.order() as f64 - 0.5
                ),
                fitted_order: Some(cmp.compatible.fitted_order),
                reference: Some(json!({
                    "compatible": cmp.compatible.reference,
                    "incompatible": cmp.incompatible.reference,
                })),
                csv: vec![
                    csv(format!("{out}-compatible.csv"), |w| cmp.compatible.write_csv(w))?,
                    csv(format!("{out}-incompatible.csv"), |w| cmp.incompatible.write_csv(w))?,
                ],
                result: serde_json::to_value(&cmp)?,
            }
        }
        Experiment::Conservation => {
            let p = r.problem();
            let u0 = c.initial.as_ref().expect("resolved").build(p, r.seed())?;
            let h = r.h_list()[0];
            let report = conservation_run(p, t, &u0, &r.solver(h), c.steps.expect("resolved"))?;
            let steady = report.energy_without_drift();
            let mut msg = format!(
                "energy deviation final {:.2e}, early max {:.2e}",
                report.final_energy_deviation, report.early_energy_deviation
            );
            let mut pass = steady;
            if p.kind() == ProblemKind::Nls {
                let tol = c.mass_tol.expect("resolved");
                pass &= report.relative_mass_drift <= tol;
                msg.push_str(&format!(", mass drift {:.2e} (tol {tol:.0e})", report.relative_mass_drift));
            }
            let mut result = serde_json::to_value(&report)?;
            if let Value::Object(m) = &mut result {
                m.remove("mass");
                m.remove("energy");
            }
            Outcome {
                pass,
                verdict: format!("{head}: {msg}"),
                fitted_order: None,
                reference: None,
                csv: vec![csv(format!("{out}.csv"), |w| report.write_csv(w))?],
                result,
            }
        }
        Experiment::Stability => {
            let grid = r.problem().grid();
            let n_steps = c.steps.expect("resolved");
            let levels = r
                .h_list()
                .par_iter()
                .map(|&h| {
                    stability_growth(t, grid, h, n_steps).map(|growth| StabilityLevel { h, n_steps, growth })
                })
                .collect::<irk_spectral::Result<Vec<_>>>()?;
            let worst = levels.iter().map(|l| l.growth.amplification).fold(0.0, f64::max);
            let tol = c.amplification_tol.expect("resolved");
            let pass = worst <= 1.0 + tol;
            let table = csv(format!("{out}.csv"), |w| {
                use std::io::Write;
                writeln!(w, "h,n_steps,amplification,norm_growth,worst_mode")?;
                for l in &levels {
                    writeln!(
                        w,
                        "{:?},{},{:?},{:?},{}",
                        l.h, l.n_steps, l.growth.amplification, l.growth.norm_growth, l.growth.worst_mode
                    )?;
                }
                Ok(())
            })?;
            Outcome {
                pass,
                verdict: format!("{head}: max amplification 1 + {:.2e} (tol {tol:.0e})", worst - 1.0),
                fitted_order: None,
                reference: None,
                csv: vec![table],
                result: json!({ "max_amplification": worst, "levels": levels }),
            }
        }
        Experiment::Smoothness => {
            let p = r.problem();
            let u0 = c.initial.as_ref().expect("resolved").build(p, r.seed())?;
            let q = c.q.expect("resolved");
            let probe = smoothness_probe(p, t, &u0, r.h_list(), q, c.fp_tol.expect("resolved"))?;
            let tail = probe.tail_ratio();
            let tol = c.bounded_tol.expect("resolved");
            let bounded = tail <= 1.0 + tol;
            let expected = c.expect_bounded.expect("resolved");
            Outcome {
                pass: bounded == expected,
                verdict: format!(
                    "{head}: q = {q} differences {} (tail ratio {tail:.3}, growth {:.3e}), expected {}",
                    if bounded { "bounded" } else { "growing" },
                    probe.growth(),
                    if expected { "bounded" } else { "growing" }
                ),
                fitted_order: None,
                reference: None,
                csv: vec![csv(format!("{out}.csv"), |w| probe.write_csv(w))?],
                result: json!({ "tail_ratio": tail, "growth": probe.growth(), "probe": probe }),
            }
        }
    };
    Ok(outcome)
}

/// Writes the CSV files and the JSON summary; returns the summary path.
pub fn write_artifacts(r: &Resolved, o: &Outcome, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in &o.csv {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        experiment: r.config.experiment.name(),
        pass: o.pass,
        verdict: &o.verdict,
        fitted_order: o.fitted_order,
        reference: o.reference.as_ref(),
        artifacts: o.csv.iter().map(|(n, _)| n.as_str()).collect(),
        config: &r.config,
        tableau: TableauSummary::new(&r.tableau),
        result: &o.result,
    };
    let path = dir.join(format!("{}.json", r.output()));
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
