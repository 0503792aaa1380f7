use std::collections::BTreeMap;

use delaystab::lyapunov::{check_rfc_sufficient, check_theorem5, check_theorem6, GridFunction};
use delaystab::segment::{NormConfig, SegmentJson};
use delaystab::stability::{
    check_ga, check_gas_vs_ugas, check_lags, check_ls, check_rfc, check_uga, fit_kl_envelope, omega_from_sigma,
    StabilityReport, Verdict,
};
use delaystab::{build_system, simulate, Sampler, Scalar, Segment, SpaceSpec};
use serde::Serialize;

use crate::config::{LyapunovCheck, Property, RunConfig};
use crate::error::CliError;
use crate::output::OutDir;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ESCAPE: u8 = 2;
pub const EXIT_FALSIFIED: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;

pub fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Consistent => EXIT_OK,
        Verdict::Falsified => EXIT_FALSIFIED,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

/// Norms of one segment in the sup space and the configured Sobolev/Hölder pair.
fn space_norms<T: Scalar>(
    seg: &Segment<T>,
    space: &SpaceSpec,
    norms: &NormConfig,
) -> Result<BTreeMap<String, f64>, CliError> {
    let p = match *space {
        SpaceSpec::SupC0 => 2.0,
        other => other.conjugate_p(),
    };
    let a = match *space {
        SpaceSpec::Hoelder(a) => a,
        _ if p.is_infinite() => 1.0,
        _ => 1.0 - 1.0 / p,
    };
    let mut out = BTreeMap::new();
    for sp in [SpaceSpec::SupC0, SpaceSpec::Sobolev(p), SpaceSpec::Hoelder(a)] {
        out.insert(sp.to_string(), norms.space(seg, &sp)?.to_f64_lossy());
    }
    Ok(out)
}

#[derive(Serialize)]
struct Terminal {
    t: f64,
    value: Vec<f64>,
    abs: f64,
    norms: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SimSummary {
    t_end: f64,
    step: f64,
    escaped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    escape_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    terminal: Option<Terminal>,
}

pub fn simulate_cmd<T: Scalar>(cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    let sys = build_system::<T>(&cfg.system)?;
    let x0: Segment<T> = cfg.initial_segment()?;
    let t_end = cfg.t_end()?;
    let r = cfg.system.r;
    let h = cfg.step.unwrap_or_else(|| x0.spacing().to_f64_lossy().min(r / 10.0));
    let tr = simulate(&sys, &x0, T::lit(t_end), T::lit(h))?;
    out.write_with("trajectory.csv", |w| tr.write_csv(w))?;
    let escape_time = tr.escape_time().map(|t| t.to_f64_lossy());
    let terminal = match escape_time {
        Some(_) => None,
        None => {
            let t = tr.t_end();
            let value = tr.value_at(t)?;
            let seg = tr.segment_at(t)?;
            Some(Terminal {
                t: t.to_f64_lossy(),
                abs: delaystab::euclid(&value).to_f64_lossy(),
                value: value.iter().map(|v| v.to_f64_lossy()).collect(),
                norms: space_norms(&seg, &cfg.space, &cfg.budget.norms)?,
            })
        }
    };
    let summary = SimSummary {
        t_end,
        step: tr.step().to_f64_lossy(),
        escaped: escape_time.is_some(),
        escape_time,
        terminal,
    };
    out.write_json("summary.json", "simulate", cfg, &summary)?;
    Ok(if summary.escaped { EXIT_ESCAPE } else { EXIT_OK })
}

#[derive(Serialize)]
struct SegmentNorms {
    index: usize,
    sup: f64,
    max_deriv: f64,
    lp_deriv: BTreeMap<String, f64>,
    hoelder: BTreeMap<String, f64>,
    space: f64,
}

pub fn norms_cmd<T: Scalar>(cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    let norms = cfg.budget.norms;
    let segs: Vec<Segment<T>> = match (&cfg.initial, cfg.count) {
        (Some(_), _) => vec![cfg.initial_segment()?],
        (None, count) => Sampler::with_norms(cfg.sampler(), norms)?.sample(count.unwrap_or(1))?,
    };
    let mut rows = Vec::with_capacity(segs.len());
    for (index, seg) in segs.iter().enumerate() {
        let mut lp = BTreeMap::new();
        for p in [2.0, 4.0, f64::INFINITY] {
            let key = if p.is_infinite() {
                "inf".to_string()
            } else {
                p.to_string()
            };
            lp.insert(key, norms.lp_deriv(seg, p)?.to_f64_lossy());
        }
        let exps = [0.25, 0.5, 0.75, 1.0];
        let hs = norms.hoelder_many(seg, &exps)?;
        rows.push(SegmentNorms {
            index,
            sup: norms.sup(seg).to_f64_lossy(),
            max_deriv: norms.max_deriv(seg).to_f64_lossy(),
            lp_deriv: lp,
            hoelder: exps
                .iter()
                .zip(hs)
                .map(|(a, h)| (a.to_string(), h.to_f64_lossy()))
                .collect(),
            space: norms.space(seg, &cfg.space)?.to_f64_lossy(),
        });
    }
    let batch: Vec<SegmentJson<f64>> = segs.iter().map(|s| SegmentJson::from(&s.cast::<f64>())).collect();
    out.write_json("segments.json", "norms", cfg, &batch)?;
    out.write_json("norms.json", "norms", cfg, &rows)?;
    Ok(EXIT_OK)
}

fn finish_report(cfg: &RunConfig, out: &OutDir, command: &str, rep: &StabilityReport) -> Result<u8, CliError> {
    out.write_json("report.json", command, cfg, rep)?;
    Ok(verdict_code(rep.verdict))
}

pub fn check_cmd<T: Scalar>(cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    let sys = build_system::<T>(&cfg.system)?;
    let property = cfg.property.ok_or(CliError::Missing("property"))?;
    let (space, b) = (&cfg.space, &cfg.budget);
    let rep = match property {
        Property::Rfc => check_rfc(&sys, space, cfg.rho()?, cfg.t_end()?, b)?,
        Property::Ls => check_ls(&sys, space, &cfg.eps_list()?, b)?,
        Property::Ga => check_ga(&sys, space, cfg.rho()?, cfg.eps()?, b)?,
        Property::Uga => check_uga(&sys, space, cfg.eps()?, cfg.rho()?, b)?,
        Property::Lags => check_lags(&sys, space, cfg.rho()?, b)?,
        Property::GasVsUgas => check_gas_vs_ugas(&sys, space, &cfg.rho_list()?, &cfg.eps_list()?, b)?,
    };
    finish_report(cfg, out, "check", &rep)
}

#[derive(Serialize)]
struct EnvelopeSummary {
    kl_shaped: bool,
    decaying: bool,
    tail_ratios: Vec<f64>,
    absent_shells: Vec<usize>,
    samples: usize,
    omega: bool,
}

pub fn envelope_cmd<T: Scalar>(cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    let sys = build_system::<T>(&cfg.system)?;
    let r = cfg.system.r;
    let horizon = cfg.t_end.unwrap_or_else(|| cfg.budget.horizon_for(r));
    let t_grid = cfg.budget.report_grid(r, horizon);
    let fit = match fit_kl_envelope(
        &sys,
        &cfg.space,
        cfg.rho()?,
        cfg.shells.unwrap_or(8),
        &t_grid,
        &cfg.budget,
        cfg.mode,
    ) {
        Err(delaystab::Error::Escaped { time }) => {
            eprintln!("trajectory escaped at t = {time}");
            return Ok(EXIT_ESCAPE);
        }
        other => other?,
    };
    let env = &fit.envelope;
    out.write_with("envelope.csv", |w| env.write_csv(w))?;
    if let Some(l) = cfg.lipschitz {
        let omega = omega_from_sigma(env, r, cfg.space.conjugate_p(), |_| l)?;
        out.write_with("omega.csv", |w| omega.write_csv(w))?;
    }
    let summary = EnvelopeSummary {
        kl_shaped: env.is_kl_shaped(),
        decaying: env.decaying(),
        tail_ratios: env.tail_ratios(),
        absent_shells: env
            .absent
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(j, _)| j)
            .collect(),
        samples: fit.samples.len(),
        omega: cfg.lipschitz.is_some(),
    };
    out.write_json("envelope.json", "envelope", cfg, &summary)?;
    Ok(EXIT_OK)
}

fn need_fn<'a>(g: &'a Option<GridFunction>, name: &'static str) -> Result<&'a GridFunction, CliError> {
    g.as_ref().ok_or(CliError::Missing(name))
}

pub fn lyapunov_cmd<T: Scalar>(cfg: &RunConfig, out: &OutDir) -> Result<u8, CliError> {
    let sys = build_system::<T>(&cfg.system)?;
    let ly = cfg.lyapunov.as_ref().ok_or(CliError::Missing("lyapunov"))?;
    let (space, b) = (&cfg.space, &cfg.budget);
    let (rho, t_end) = (cfg.rho()?, cfg.t_end()?);
    let rep = match ly.check {
        LyapunovCheck::Theorem5 => check_theorem5(
            &sys,
            &ly.functional,
            need_fn(&ly.a1, "lyapunov.a1")?,
            need_fn(&ly.a2, "lyapunov.a2")?,
            space,
            rho,
            t_end,
            b,
        )?,
        LyapunovCheck::Theorem6 => check_theorem6(
            &sys,
            &ly.functional,
            need_fn(&ly.a1, "lyapunov.a1")?,
            need_fn(&ly.a2, "lyapunov.a2")?,
            need_fn(&ly.q, "lyapunov.q")?,
            space,
            rho,
            ly.trajectories,
            t_end,
            b,
        )?,
        LyapunovCheck::RfcSufficient => check_rfc_sufficient(
            &sys,
            &ly.functional,
            need_fn(&ly.a, "lyapunov.a")?,
            ly.mu.ok_or(CliError::Missing("lyapunov.mu"))?,
            space,
            rho,
            t_end,
            b,
        )?,
    };
    finish_report(cfg, out, "lyapunov", &rep)
}
