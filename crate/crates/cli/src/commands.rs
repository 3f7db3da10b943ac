use std::path::{Path, PathBuf};

use log::info;
use qwalk::coin::{build_profile, CoinField, ProfileJson};
use qwalk::dispersion::{dispersion_table, Branch, FreeWalk, XiGrid};
use qwalk::dispersive::{default_schedule, fit_decay, run_decay, DecayExperiment, Route};
use qwalk::evolution::WalkOperator;
use qwalk::lattice::{Spinor, SpinorField, Window};
use qwalk::scattering::{resolve_bound_states, scattering_coefficients, EdgeClass};
use qwalk::{Error, Execution, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::cache::JostCache;
use crate::config::{defaults, sha256_hex, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, json_bytes, num, write_atomic, Meta};
use crate::{BranchArg, BranchesArg, Command, Global, RouteArg};

pub fn run(g: &Global, cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate {
            profile,
            t,
            initial,
            out,
        } => simulate(g, &profile, t, &initial, &out),
        Command::Dispersion { rho0, grid, out } => dispersion(g, rho0, grid, &out),
        Command::Jost {
            profile,
            branch,
            grid,
            delta,
            margin,
            out,
        } => jost(g, &profile, branch, grid, delta, margin, &out),
        Command::Scattering {
            profile,
            branch,
            grid,
            tol,
            out,
        } => scattering(g, &profile, branch, grid, tol, &out),
        Command::Dispersive {
            profile,
            tmax,
            schedule,
            route,
            initial,
            out,
        } => dispersive(g, &profile, tmax, schedule, route, &initial, &out),
        Command::Fit { input, route, out } => fit(g, &input, route, out.as_deref()),
        Command::Validate { profile, out } => validate(g, &profile, out.as_deref()),
    }
}

/// Parsed profile plus its canonical JSON, which keys hashes and caches.
fn load_profile(path: &Path) -> CliResult<(CoinField, Value)> {
    let text = std::fs::read_to_string(path)?;
    let doc: ProfileJson =
        serde_json::from_str(&text).map_err(|e| Error::ingestion(None, format!("schema: {e}")))?;
    let coin = build_profile(&doc)?;
    Ok((coin, serde_json::to_value(&doc)?))
}

fn initial_state(choice: &str, seed: u64) -> CliResult<(SpinorField, Value)> {
    match choice {
        "delta" => Ok((
            SpinorField::delta(Window::centered(0), 0, Spinor::real(1.0, 0.0))?,
            json!("delta"),
        )),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let u = SpinorField::from_fn(Window::centered(defaults::RANDOM_RADIUS), |_| {
                Spinor::new(draw(), draw())
            });
            let l1 = u.norm_l1();
            Ok((u.scaled(C64::new(1.0 / l1, 0.0)), json!("random")))
        }
        path => {
            let text = std::fs::read_to_string(path)?;
            let u = SpinorField::from_json(&text)?;
            Ok((u, json!({ "file_sha256": sha256_hex(text.as_bytes()) })))
        }
    }
}

fn check_grid(n: usize) -> CliResult<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(CliError::Usage(format!(
            "grid {n} must be a power of two >= 16"
        )));
    }
    Ok(())
}

fn branch_of(b: BranchArg) -> Branch {
    match b {
        BranchArg::Minus => Branch::Minus,
        BranchArg::Plus => Branch::Plus,
    }
}

fn spinor_row(x: i64, s: Spinor) -> Vec<String> {
    vec![
        x.to_string(),
        num(s.up.re),
        num(s.up.im),
        num(s.down.re),
        num(s.down.im),
    ]
}

fn simulate(g: &Global, profile: &Path, t: usize, initial: &str, out: &Path) -> CliResult<()> {
    let (coin, doc) = load_profile(profile)?;
    let (u0, init) = initial_state(initial, g.seed)?;
    let cfg = RunConfig::new("simulate", g.seed)
        .input(doc)
        .knob("t", t)
        .knob("initial", init);
    let w = u0
        .window()
        .hull(&coin.support_or_origin(0))
        .expand(t as i64 + 1);
    let op = WalkOperator::new(coin, w)?;
    let v = op.apply_u_power(&u0.resized(w)?, t)?;
    let rows = v.iter().map(|(x, s)| spinor_row(x, s));
    let bytes = csv_bytes(
        &Meta::of(&cfg),
        &["x", "up_re", "up_im", "down_re", "down_im"],
        rows,
    )?;
    write_atomic(out, &bytes)?;
    Ok(())
}

fn dispersion(g: &Global, rho0: f64, grid: usize, out: &Path) -> CliResult<()> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(Error::validation(None, format!("rho0 = {rho0} must lie in (0, 1)")).into());
    }
    check_grid(grid)?;
    let walk = FreeWalk::new(C64::new((1.0 - rho0 * rho0).sqrt(), 0.0))?;
    let cfg = RunConfig::new("dispersion", g.seed)
        .knob("rho0", rho0)
        .knob("grid", grid);
    let rows = dispersion_table(&walk, grid)?.into_iter().map(|r| {
        vec![
            num(r.xi),
            num(r.lambda),
            num(r.d1),
            num(r.d2),
            num(r.d3),
            num(r.w0.re),
            num(r.w0.im),
        ]
    });
    let header = [
        "xi", "lambda", "lambda_1", "lambda_2", "lambda_3", "w0_re", "w0_im",
    ];
    write_atomic(out, &csv_bytes(&Meta::of(&cfg), &header, rows)?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn jost(
    g: &Global,
    profile: &Path,
    branch: BranchArg,
    grid: usize,
    delta: f64,
    margin: i64,
    out: &Path,
) -> CliResult<()> {
    check_grid(grid)?;
    if margin < 0 {
        return Err(CliError::Usage("margin must be non-negative".into()));
    }
    let (coin, doc) = load_profile(profile)?;
    let b = branch_of(branch);
    let cfg = RunConfig::new("jost", g.seed)
        .input(doc.clone())
        .knob("branch", b.name())
        .knob("grid", grid)
        .knob("delta", delta)
        .knob("margin", margin);
    let window = coin.support_or_origin(margin);
    let cache = JostCache::new(g.cache_dir.clone());
    let (table, lookup) = cache.table(
        &coin,
        &doc,
        b,
        XiGrid::new(grid, delta)?,
        window,
        Execution::default(),
    )?;
    info!("jost table {lookup:?}");
    let header = [
        "xi_re",
        "xi_im",
        "x",
        "m_plus_up_re",
        "m_plus_up_im",
        "m_plus_down_re",
        "m_plus_down_im",
        "m_minus_up_re",
        "m_minus_up_im",
        "m_minus_down_re",
        "m_minus_down_im",
        "residual",
    ];
    let rows = table.rows(&coin).into_iter().map(|r| {
        let mut v = vec![num(r.xi_re), num(r.xi_im), r.x.to_string()];
        v.extend(r.m_plus.iter().chain(&r.m_minus).map(|a| num(*a)));
        v.push(num(r.residual));
        v
    });
    write_atomic(out, &csv_bytes(&Meta::of(&cfg), &header, rows)?)?;
    Ok(())
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let base = match stem.extension().and_then(|e| e.to_str()) {
        Some("json" | "csv") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let mut name = base.into_os_string();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn scattering(
    g: &Global,
    profile: &Path,
    branches: BranchesArg,
    grid: usize,
    tol: f64,
    out: &Path,
) -> CliResult<()> {
    check_grid(grid)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(CliError::Usage("tol must be positive".into()));
    }
    let (coin, doc) = load_profile(profile)?;
    let chosen: Vec<Branch> = match branches {
        BranchesArg::Minus => vec![Branch::Minus],
        BranchesArg::Plus => vec![Branch::Plus],
        BranchesArg::Both => Branch::BOTH.to_vec(),
    };
    let cfg = RunConfig::new("scattering", g.seed)
        .input(doc.clone())
        .knob(
            "branches",
            chosen.iter().map(|b| b.name()).collect::<Vec<_>>(),
        )
        .knob("grid", grid)
        .knob("tol", tol);
    let meta = Meta::of(&cfg);
    let cache = JostCache::new(g.cache_dir.clone());
    let (reduced, _) = coin.gauge_reduce();
    let window = coin.support_or_origin(1);
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for b in chosen {
        // the scattering data only see the gauge-reduced coin
        let (table, lookup) = cache.table(
            &reduced,
            &doc,
            b,
            XiGrid::real(grid)?,
            window,
            Execution::default(),
        )?;
        info!("{} table {lookup:?}", b.name());
        let r = scattering_coefficients(&table)?;
        worst = worst.max(r.unitarity_defect);
        for j in 0..r.xi.len() {
            rows.push(vec![
                b.name().to_string(),
                num(r.xi[j]),
                num(r.wronskian[j].re),
                num(r.wronskian[j].im),
                num(r.t[j].re),
                num(r.t[j].im),
                num(r.r_plus[j].re),
                num(r.r_plus[j].im),
                num(r.r_minus[j].re),
                num(r.r_minus[j].im),
            ]);
        }
        let [wt, wp, wm] = r.wiener_norms()?;
        summaries.push(json!({
            "branch": b.name(),
            "unitarity_defect": r.unitarity_defect,
            "t_consistency": r.t_consistency,
            "relation_residual": r.relation_residual,
            "wronskian_variation": r.wronskian_variation,
            "min_offcorner_wronskian": r.min_offcorner_wronskian,
            "max_transmission": r.max_transmission(),
            "wiener_norms": { "t": wt, "r_plus": wp, "r_minus": wm },
            "edges": r.edges,
            "extrapolated": r.extrapolated,
        }));
    }
    let states = resolve_bound_states(&coin, coin.support_or_origin(0), Execution::default())?;
    let generic = summaries
        .iter()
        .flat_map(|s| s["edges"].as_array().cloned().unwrap_or_default())
        .all(|e| e["class"] == json!(EdgeClass::Generic));
    let body = json!({
        "branches": summaries,
        "generic": generic,
        "bound_states": states,
        "unitarity_tolerance": tol,
    });
    write_atomic(&with_extension(out, "json"), &json_bytes(&meta, body)?)?;
    let header = [
        "branch",
        "xi",
        "wronskian_re",
        "wronskian_im",
        "t_re",
        "t_im",
        "r_plus_re",
        "r_plus_im",
        "r_minus_re",
        "r_minus_im",
    ];
    write_atomic(
        &with_extension(out, "csv"),
        &csv_bytes(&meta, &header, rows)?,
    )?;
    if worst > tol {
        return Err(
            Error::Consistency(format!("unitarity defect {worst:e} exceeds {tol:e}")).into(),
        );
    }
    Ok(())
}

fn dispersive(
    g: &Global,
    profile: &Path,
    tmax: usize,
    schedule: Option<Vec<usize>>,
    route: RouteArg,
    initial: &str,
    out: &Path,
) -> CliResult<()> {
    let (coin, doc) = load_profile(profile)?;
    let (u0, init) = initial_state(initial, g.seed)?;
    let schedule = match schedule {
        Some(s) => s,
        None => default_schedule()
            .into_iter()
            .filter(|t| *t <= tmax)
            .collect(),
    };
    if schedule.is_empty() {
        return Err(CliError::Usage(format!(
            "no scheduled time is <= {tmax}; pass --schedule"
        )));
    }
    let route = match route {
        RouteArg::Direct => Route::Direct,
        RouteArg::Kernel => Route::Kernel,
        RouteArg::Both => Route::Both,
    };
    let cfg = RunConfig::new("dispersive", g.seed)
        .input(doc)
        .knob("schedule", &schedule)
        .knob("route", route.name())
        .knob("initial", init);
    let r = run_decay(&DecayExperiment {
        coin,
        initial: u0,
        schedule,
        route,
        exec: Execution::default(),
    })
    .map_err(|e| match e {
        Error::MemoryGuard { .. } => {
            CliError::Usage(format!("{e}; the kernel route needs a shorter --schedule"))
        }
        other => other.into(),
    })?;
    info!(
        "{} bound states removed; l2 drift {:e}",
        r.bound_states, r.l2_drift
    );
    let rows = r.samples.iter().map(|s| {
        vec![
            s.t.to_string(),
            num(s.supnorm),
            num(s.l2norm),
            num(s.ratio),
            s.route.name().to_string(),
        ]
    });
    write_atomic(
        out,
        &csv_bytes(
            &Meta::of(&cfg),
            &["t", "supnorm", "l2norm", "ratio", "route"],
            rows,
        )?,
    )?;
    if let Some(gap) = r.route_gap {
        if gap > 1e-7 {
            return Err(Error::Consistency(format!("routes disagree by {gap:e}")).into());
        }
    }
    Ok(())
}

fn fit(g: &Global, input: &Path, route: Option<String>, out: Option<&Path>) -> CliResult<()> {
    let bytes = std::fs::read(input)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("input lacks a {name:?} column")))
    };
    let (ti, vi) = (col("t")?, col("supnorm")?);
    let ri = headers.iter().position(|h| h == "route");
    let mut series = Vec::new();
    let mut chosen = route;
    for rec in reader.records() {
        let rec = rec?;
        if let Some(ri) = ri {
            let r = rec.get(ri).unwrap_or_default().to_string();
            if chosen.get_or_insert_with(|| r.clone()) != &r {
                continue;
            }
        }
        let parse = |i: usize| -> CliResult<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| {
                CliError::Usage(format!(
                    "unreadable number in row {:?}",
                    rec.position().map(|p| p.line())
                ))
            })
        };
        series.push((parse(ti)?, parse(vi)?));
    }
    let f = fit_decay(&series)?;
    let cfg = RunConfig::new("fit", g.seed)
        .input(json!({ "file_sha256": sha256_hex(&bytes) }))
        .knob("route", &chosen);
    let body = json!({
        "exponent": f.exponent,
        "stderr": f.stderr,
        "n_points": f.n_points,
        "fitted_points": f.fitted_points,
        "envelope": f.envelope,
        "residual": f.residual,
        "route": chosen,
    });
    let bytes = json_bytes(&Meta::of(&cfg), body)?;
    match out {
        Some(p) => write_atomic(p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn validate(g: &Global, profile: &Path, out: Option<&Path>) -> CliResult<()> {
    let (coin, doc) = load_profile(profile).map_err(|e| match e {
        CliError::Lib(Error::Ingestion { site, msg } | Error::Validation { site, msg }) => {
            CliError::Lib(Error::validation(
                site,
                format!("standing coin assumption violated: {msg}"),
            ))
        }
        other => other,
    })?;
    let cfg = RunConfig::new("validate", g.seed).input(doc);
    let norms: Vec<Option<f64>> = (0..3)
        .map(|s| Some(coin.perturbation_norm_with_tail(s)).filter(|v| v.is_finite()))
        .collect();
    let order = norms.iter().take_while(|n| n.is_some()).count() as i64 - 1;
    let generic = order >= 1;
    let exceptional = order >= 2;
    let summary = match (generic, exceptional) {
        (true, true) => "generic-case ready, exceptional-case ready",
        (true, false) => "generic-case ready, exceptional-case not",
        _ => "neither decay case ready",
    };
    let body = json!({
        "alpha0": { "re": coin.alpha0().re, "im": coin.alpha0().im },
        "rho0": coin.rho0(),
        "support": coin.support().map(|w| [w.min, w.max]),
        "truncation": coin.truncation(),
        "assumptions": {
            "unitary_coins": true,
            "alpha_below_one": true,
            "alpha0_in_open_unit_interval": true,
        },
        "perturbation_norms": { "sigma0": norms[0], "sigma1": norms[1], "sigma2": norms[2] },
        "weight_order": order,
        "hypotheses": {
            "spectral_structure": order >= 0,
            "no_edge_eigenvalues": generic,
            "dispersive_generic": generic,
            "dispersive_exceptional": exceptional,
        },
        "summary": summary,
    });
    let bytes = json_bytes(&Meta::of(&cfg), body)?;
    match out {
        Some(p) => write_atomic(p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}
