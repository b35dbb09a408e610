//! The subcommands. Each writes into its own output directory and ends with a manifest.

use std::path::{Path, PathBuf};

use lattice_lab_core::attractor::{pullback_cloud, tail_profile, usc_table, AttractorCloud};
use lattice_lab_core::dynamics::{diag_g1, energy_balance, integrate, IntegrateOptions};
use lattice_lab_core::io::sidecar_path;
use lattice_lab_core::lattice::lp_norm;
use lattice_lab_core::liouville::{
    default_test_function, liouville_terms, statistical_solution_check, termwise_table, SolutionThresholds,
};
use lattice_lab_core::measures::{bl_table, measure_family, zero_anchor, EnsembleMeasure, MeasureRequest};
use lattice_lab_core::noise::sample_noise;
use lattice_lab_core::testfn::TestFunctionDict;
use lattice_lab_core::{LatticeVec, NoisePath};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, OutputDir, Table};
use crate::CliError;

/// The noise path of a run: loaded from `reuse` when given, sampled from the
/// config otherwise.
pub fn noise_path(cfg: &RunConfig, reuse: Option<&Path>) -> Result<NoisePath, CliError> {
    let n = &cfg.noise;
    match reuse {
        Some(file) => {
            let path = NoisePath::load(file)
                .map_err(|e| CliError::Config(format!("--reuse-noise {}: {e}", file.display())))?;
            if (path.dt() - n.dt).abs() > 1e-12 * n.dt {
                return Err(CliError::Config(format!(
                    "--reuse-noise: path dt {} differs from noise.dt {}",
                    path.dt(),
                    n.dt
                )));
            }
            Ok(path)
        }
        None => Ok(sample_noise(n.seed, n.t_min, n.t_max, n.dt, n.burn_in)?),
    }
}

fn open(cfg: &RunConfig, dir: &Path, path: &NoisePath) -> Result<OutputDir, CliError> {
    let mut out = OutputDir::create(dir, &cfg.output, &cfg.digest(), &path.digest(), path.seed())?;
    out.text("config.toml", &cfg.canonical_toml())?;
    if out.wants("bin") {
        path.save(out.path("noise.bin"))?;
        out.record("noise.bin");
    }
    Ok(out)
}

fn sidecar_name(name: &str) -> String {
    sidecar_path(Path::new(name)).to_string_lossy().into_owned()
}

/// Unique parameter values, reference first.
fn alpha_list(cfg: &RunConfig) -> Vec<f64> {
    let e = &cfg.experiment;
    let mut out = vec![e.alpha0];
    for &a in &e.alphas {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

pub fn cmd_simulate(cfg: &RunConfig, path: &NoisePath, dir: &Path) -> Result<PathBuf, CliError> {
    let mut out = open(cfg, dir, path)?;
    let e = &cfg.experiment;
    let params = &cfg.model.params;
    let forcing = &cfg.model.forcing;
    let n = e.half_width;
    let u0 = LatticeVec::from_fn(n, |i| e.initial_amplitude / (1.0 + (i * i) as f64))?;
    let v0 = u0.scale((-params.alpha * path.z_at(e.tau)?).exp());
    let traj = integrate(&v0, e.tau, e.t_end, path, params, forcing, IntegrateOptions::default())?;
    let rows = energy_balance(&traj);
    let scale = rows.iter().map(|r| r.lhs.abs().max(r.rhs.abs())).fold(0.0, f64::max);
    let worst_gap = rows.iter().map(|r| r.rhs - r.lhs).fold(f64::INFINITY, f64::min);
    let g1 = diag_g1(params.alpha, e.tau, e.t_end, path, u0.l2_norm(), params, forcing, n)?;

    let mut header: Vec<String> = ["t", "z", "norm_l2", "norm_lq", "energy_lhs", "energy_rhs", "rhs_minus_lhs"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend((-(n as i64)..=n as i64).map(|i| format!("u[{i}]")));
    let mut table = Table::new(header);
    for (k, row) in rows.iter().enumerate() {
        if k % e.record_stride != 0 && k + 1 != rows.len() {
            continue;
        }
        let u = &traj.u[k];
        let mut cells = vec![
            num(row.t),
            num(traj.z[k]),
            num(u.l2_norm()),
            num(lp_norm(u, params.q)?),
            num(row.lhs),
            num(row.rhs),
            num(row.rhs - row.lhs),
        ];
        cells.extend(u.values().iter().map(|x| num(*x)));
        table.push(cells);
    }
    out.csv("trajectory.csv", &table)?;
    let summary = json!({
        "alpha": params.alpha,
        "steps": rows.len() - 1,
        "energy_scale": scale,
        "min_rhs_minus_lhs": worst_gap,
        "relative_energy_gap": worst_gap / scale,
        "g1_bound": g1,
        "max_v_norm_sq": traj.v.iter().map(|v| v.l2_norm().powi(2)).fold(0.0, f64::max),
    });
    out.json("summary.json", &summary)?;
    out.finish("simulate", &summary)
}

pub fn cmd_attractor(cfg: &RunConfig, path: &NoisePath, dir: &Path) -> Result<PathBuf, CliError> {
    let mut out = open(cfg, dir, path)?;
    let spec = cfg.cloud_spec();
    let (params, forcing) = (&cfg.model.params, &cfg.model.forcing);
    let alphas = alpha_list(cfg);
    let clouds = alphas
        .iter()
        .map(|&a| pullback_cloud(a, &spec, path, params, forcing))
        .collect::<Result<Vec<AttractorCloud>, _>>()?;
    let reference = &clouds[0];
    if out.wants("bin") {
        for (k, c) in clouds.iter().enumerate() {
            let name = format!("cloud_{k:02}.bin");
            c.save(&out.path(&name))?;
            out.record(&name);
            out.record(&sidecar_name(&name));
        }
    }

    let rows = usc_table(reference, &clouds[1..])?;
    let mut usc = Table::new(["alpha", "alpha0", "dist_l2", "dist_lq", "dist_sum", "M", "T"]);
    for r in &rows {
        usc.push(vec![
            num(r.alpha),
            num(reference.meta.alpha),
            num(r.dist_l2),
            num(r.dist_lq),
            num(r.dist_sum),
            r.m.to_string(),
            num(r.t),
        ]);
    }
    out.csv("usc.csv", &usc)?;

    let mut tails = Table::new(["alpha", "cutoff", "tail_l2", "tail_lq", "max_l2", "max_lq"]);
    for c in &clouds {
        for t in tail_profile(&c.points, &cfg.experiment.tail_cutoffs, c.meta.q)? {
            tails.push(vec![
                num(c.meta.alpha),
                t.cutoff.to_string(),
                num(t.l2),
                num(t.lq),
                num(c.meta.max_l2),
                num(c.meta.max_lq),
            ]);
        }
    }
    out.csv("tails.csv", &tails)?;

    let metas: Vec<_> = clouds.iter().map(|c| &c.meta).collect();
    out.json("clouds.json", &metas)?;
    let summary = json!({
        "clouds": clouds.len(),
        "alpha0": reference.meta.alpha,
        "resolution": clouds.iter().map(|c| c.meta.resolution).collect::<Vec<_>>(),
        "within_absorbing": clouds.iter().all(|c| c.within_absorbing()),
    });
    out.finish("attractor", &summary)
}

fn family_radius(family: &[EnsembleMeasure]) -> f64 {
    let r = family.iter().map(|m| m.max_norm_sq()).fold(0.0, f64::max).sqrt();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

pub fn cmd_measures(cfg: &RunConfig, path: &NoisePath, dir: &Path) -> Result<PathBuf, CliError> {
    let mut out = open(cfg, dir, path)?;
    let spec = cfg.measure_spec();
    let e = &cfg.experiment;
    let (params, forcing) = (&cfg.model.params, &cfg.model.forcing);
    let base = path.theta_shift(-spec.tau)?;
    let requests: Vec<MeasureRequest> = e
        .measure_times
        .iter()
        .map(|&t| MeasureRequest::trailing(t, spec.window))
        .collect();
    let anchor = zero_anchor(spec.half_width);
    let alphas = alpha_list(cfg);
    let families = alphas
        .iter()
        .map(|&a| measure_family(a, &requests, &base, &anchor, spec.ds, spec.half_width, params, forcing))
        .collect::<Result<Vec<_>, _>>()?;
    let radius = e.dict_radius.unwrap_or_else(|| family_radius(&families[0]));
    let dict = TestFunctionDict::standard(spec.half_width, radius, e.dict_directions)?;

    if out.wants("bin") {
        for (k, fam) in families.iter().enumerate() {
            for (j, mu) in fam.iter().enumerate() {
                let name = format!("measure_{k:02}_t{j:02}.bin");
                mu.save(&out.path(&name))?;
                out.record(&name);
                out.record(&sidecar_name(&name));
            }
        }
    }
    let mut weights = Table::new(["alpha", "t", "particles", "weight_sum", "max_norm"]);
    for fam in &families {
        for mu in fam {
            weights.push(vec![
                num(mu.provenance.alpha),
                num(mu.t()),
                mu.len().to_string(),
                num(mu.weights.iter().sum::<f64>()),
                num(mu.max_norm_sq().sqrt()),
            ]);
        }
    }
    out.csv("measures.csv", &weights)?;

    let rows = bl_table(&families[0], &families[1..], &dict)?;
    let mut bl = Table::new(["alpha", "alpha0", "t", "bl", "particles"]);
    for r in &rows {
        bl.push(vec![
            num(r.alpha),
            num(e.alpha0),
            num(r.t),
            num(r.bl),
            r.particles.to_string(),
        ]);
    }
    out.csv("bl.csv", &bl)?;
    let summary = json!({
        "families": families.len(),
        "times": e.measure_times,
        "dict_radius": radius,
        "dict_size": dict.len(),
    });
    out.json("summary.json", &summary)?;
    out.finish("measures", &summary)
}

pub fn cmd_liouville(cfg: &RunConfig, path: &NoisePath, dir: &Path) -> Result<PathBuf, CliError> {
    let mut out = open(cfg, dir, path)?;
    let spec = cfg.liouville_spec();
    let e = &cfg.experiment;
    let (params, forcing) = (&cfg.model.params, &cfg.model.forcing);
    let alphas = alpha_list(cfg);
    let families = alphas
        .iter()
        .map(|&a| spec.family(a, path, params, forcing))
        .collect::<Result<Vec<_>, _>>()?;
    let radius = e.psi_radius.unwrap_or_else(|| family_radius(&families[0]));
    let psi = default_test_function(forcing, spec.half_width, radius)?;
    let dict = TestFunctionDict::standard(spec.half_width, radius, e.dict_directions)?;
    let base = spec.base(path)?;

    let mut reports = Vec::with_capacity(families.len());
    for fam in &families {
        let report = liouville_terms(fam, &psi, spec.s, spec.t, &base, params, forcing)?;
        let solution = statistical_solution_check(
            fam,
            &dict,
            std::slice::from_ref(&psi),
            spec.s,
            spec.t,
            &base,
            params,
            forcing,
            SolutionThresholds::default(),
        )?;
        reports.push(json!({ "report": report, "statistical_solution": solution }));
    }
    out.json("reports.json", &reports)?;

    let (r0, rows) = termwise_table(&families[0], &families[1..], &psi, &spec, path, params, forcing)?;
    let mut terms = Table::new([
        "alpha",
        "alpha0",
        "lhs_t",
        "lhs_s",
        "drift",
        "stoch",
        "stoch_strat",
        "correction",
        "d_lhs_t",
        "d_lhs_s",
        "d_drift",
        "d_stoch",
        "d_stoch_strat",
        "d_correction",
        "sup_diff",
    ]);
    let zero = 0.0;
    terms.push(
        [r0.alpha, r0.alpha, r0.lhs_t, r0.lhs_s, r0.drift, r0.stoch, r0.stoch_strat, r0.correction]
            .into_iter()
            .chain([zero; 7])
            .map(num)
            .collect(),
    );
    for r in &rows {
        let w = &r.terms;
        terms.push(
            [
                r.alpha,
                r0.alpha,
                w.lhs_t,
                w.lhs_s,
                w.drift,
                w.stoch,
                w.stoch_strat,
                w.correction,
                r.d_lhs_t,
                r.d_lhs_s,
                r.d_drift,
                r.d_stoch,
                r.d_stoch_strat,
                r.d_correction,
                r.sup_diff,
            ]
            .into_iter()
            .map(num)
            .collect(),
        );
    }
    out.csv("termwise.csv", &terms)?;
    let summary = json!({
        "families": families.len(),
        "psi_radius": radius,
        "nodes": spec.grid().len(),
    });
    out.finish("liouville", &summary)
}

/// Every subcommand on one shared noise path, each in its own subdirectory.
pub fn cmd_sweep_all(cfg: &RunConfig, path: &NoisePath, dir: &Path) -> Result<PathBuf, CliError> {
    let mut out = open(cfg, dir, path)?;
    let mut parts = Vec::new();
    type Cmd = fn(&RunConfig, &NoisePath, &Path) -> Result<PathBuf, CliError>;
    let cmds: [(&str, Cmd); 4] = [
        ("simulate", cmd_simulate),
        ("attractor", cmd_attractor),
        ("measures", cmd_measures),
        ("liouville", cmd_liouville),
    ];
    for (name, cmd) in cmds {
        let manifest = cmd(cfg, path, &dir.join(name))?;
        let rel = format!("{name}/manifest.json");
        debug_assert_eq!(manifest, out.path(&rel));
        out.record(&rel);
        parts.push(name);
    }
    out.finish("sweep-all", &json!({ "parts": parts }))
}
