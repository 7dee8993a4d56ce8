use std::path::PathBuf;

use bifurcat_core::continuation::{
    continue_equilibrium, continue_hopf, cycle_family_sweep, find_limit_cycle, locate_hopf, BifurcationEvent, Branch,
    EventKind, ShootingConfig, StepControl,
};
use bifurcat_core::equilibria::{all_equilibria, classify_region, coexistence_equilibria, newton_polish, residual};
use bifurcat_core::equilibria::{Equilibrium, EquilibriumKind};
use bifurcat_core::hopf::{check_hopf_theorem, nilpotent_kappa2};
use bifurcat_core::integrator::{integrate, IntegrationConfig, Termination};
use bifurcat_core::lyapunov::{criticality_verdict, lyapunov_pair};
use bifurcat_core::stability::{char_coeffs, classify_equilibrium};
use bifurcat_core::{ModelParams, ParamName, State};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::output::{events_json, Cell, Sink, Table};
use crate::scenario::{parse_name, ContinuationSpec, FigureSource, Scenario};
use crate::svg::{Curve, Figure, Marker};
use crate::{Cli, Command, Failure, Format};

/// Residual accepted for a user-supplied start state after Newton polishing.
const START_TOL: f64 = 1e-8;

struct Ctx<'a> {
    cli: &'a Cli,
    scenario: Scenario,
    params: ModelParams,
    sink: Sink,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn table(&mut self, stem: &str, t: &Table) -> Result<(), Failure> {
        let (name, body) = match self.cli.format {
            Format::Csv => (format!("{stem}.csv"), t.to_csv()),
            Format::Json => (format!("{stem}.json"), t.to_json()),
        };
        let p = self.sink.write(&name, &body)?;
        self.written.push(p);
        Ok(())
    }

    fn file(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let p = self.sink.write(name, body)?;
        self.written.push(p);
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, Failure> {
    let scenario = Scenario::load(&cli.scenario)?;
    let params = scenario.model_params()?;
    let sink = Sink::new(&cli.out)?;
    let mut ctx = Ctx {
        cli,
        scenario,
        params,
        sink,
        written: Vec::new(),
    };
    match cli.command {
        Command::Simulate => simulate(&mut ctx)?,
        Command::Equilibria => equilibria(&mut ctx)?,
        Command::Stability => stability(&mut ctx)?,
        Command::Hopf => hopf(&mut ctx)?,
        Command::Lyapunov => lyapunov(&mut ctx)?,
        Command::ContinueEq => {
            let branch = equilibrium_branch(&ctx)?;
            emit_branch(&mut ctx, &branch)?;
        }
        Command::ContinueHopf => {
            let branch = hopf_branch(&ctx)?;
            emit_branch(&mut ctx, &branch)?;
        }
        Command::Cycles => cycles(&mut ctx)?,
        Command::Figure => figure(&mut ctx)?,
    }
    Ok(ctx.written)
}

fn simulate(ctx: &mut Ctx) -> Result<(), Failure> {
    let spec = Scenario::section(&ctx.scenario.simulate, "simulate")?.clone();
    let p = ctx.params;
    let x0 = match spec.initial {
        Some([e1, e2, m]) => State::new(e1, e2, m),
        None => {
            let eq = coexistence_equilibria(&p).into_iter().next().ok_or_else(|| {
                Failure::numerical("no coexistence equilibrium to start from; give [simulate].initial")
            })?;
            let mut rng = StdRng::seed_from_u64(ctx.cli.seed);
            let mut jitter = |v: f64| v * (1.0 + 1e-2 * rng.gen_range(-1.0..1.0));
            State::new(jitter(eq.state.e1), jitter(eq.state.e2), jitter(eq.state.m))
        }
    };
    if !(spec.t_end > spec.t_start) {
        return Err(Failure::Input("schema violation: t_end must exceed t_start".into()));
    }
    let mut cfg = IntegrationConfig::span(spec.t_start, spec.t_end);
    if let Some(r) = spec.rtol {
        cfg.rtol = r;
    }
    if let Some(a) = spec.atol {
        cfg.atol = a;
    }
    let tr = integrate(&p, &x0, &cfg)?;
    let samples: Vec<(f64, State)> = match spec.samples {
        Some(n) => tr
            .sample(n)
            .into_iter()
            .map(|(t, x)| (t, State::from_vector(&x)))
            .collect(),
        None => tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(&t, x)| (t, State::from_vector(x)))
            .collect(),
    };
    let mut t = Table::new(["t", "E1", "E2", "M"]);
    for (ti, x) in samples {
        t.push(vec![ti.into(), x.e1.into(), x.e2.into(), x.m.into()]);
    }
    ctx.table("trajectory", &t)?;
    if tr.termination != Termination::Completed {
        return Err(Failure::numerical(format!(
            "integration stopped at t = {} ({:?})",
            tr.t_final(),
            tr.termination
        )));
    }
    Ok(())
}

fn equilibria(ctx: &mut Ctx) -> Result<(), Failure> {
    let p = ctx.params;
    let region = classify_region(&p);
    let mut t = Table::new(["kind", "multiplicity", "E1", "E2", "M", "region"]);
    for eq in all_equilibria(&p) {
        let s = eq.state;
        t.push(vec![
            eq.kind.as_str().into(),
            eq.multiplicity.into(),
            s.e1.into(),
            s.e2.into(),
            s.m.into(),
            region.as_str().into(),
        ]);
    }
    ctx.table("equilibria", &t)
}

fn stability(ctx: &mut Ctx) -> Result<(), Failure> {
    let p = ctx.params;
    let mut t = Table::new([
        "index",
        "E1",
        "E2",
        "M",
        "A0",
        "A1",
        "A2",
        "trace",
        "determinant",
        "lambda1_re",
        "lambda1_im",
        "lambda2_re",
        "lambda2_im",
        "lambda3_re",
        "lambda3_im",
        "label",
    ]);
    for (i, eq) in coexistence_equilibria(&p).iter().enumerate() {
        let cc = char_coeffs(&p, eq)?;
        let v = classify_equilibrium(&p, eq)?;
        let s = eq.state;
        let mut row: Vec<Cell> = vec![
            (i + 1).into(),
            s.e1.into(),
            s.e2.into(),
            s.m.into(),
            cc.a0.into(),
            cc.a1.into(),
            cc.a2.into(),
            cc.trace.into(),
            cc.determinant.into(),
        ];
        for l in v.eigenvalues {
            row.push(l.re.into());
            row.push(l.im.into());
        }
        row.push(v.label.as_str().into());
        t.push(row);
    }
    ctx.table("stability", &t)
}

fn hopf(ctx: &mut Ctx) -> Result<(), Failure> {
    let p = ctx.params;
    let mut t = Table::new([
        "index",
        "E1",
        "E2",
        "M",
        "A0",
        "A1",
        "A2",
        "H",
        "kappa2_hat",
        "kappa2_hypothesis",
        "kappa2_tilde",
        "kappa2_s123",
        "h2",
        "h1",
        "h0",
        "delta_h",
        "alpha_minus",
        "alpha_plus",
        "alpha_star",
        "certified",
        "omega",
        "transversality",
        "transversality_closed_form",
        "codimension",
    ]);
    for r in check_hopf_theorem(&p)? {
        let s = r.equilibrium.state;
        let nil = nilpotent_kappa2(&p, s.e2)?;
        let q = &r.quadratic;
        let c = r.certificate;
        t.push(vec![
            r.index.into(),
            s.e1.into(),
            s.e2.into(),
            s.m.into(),
            r.coeffs.a0.into(),
            r.coeffs.a1.into(),
            r.coeffs.a2.into(),
            r.coeffs.hopf_function().into(),
            r.kappa2_hat.into(),
            r.kappa2_hypothesis.into(),
            nil.kappa2_tilde.into(),
            nil.kappa2_s123.into(),
            q.h2.into(),
            q.h1.into(),
            q.h0.into(),
            q.delta_h.into(),
            q.alpha_minus.into(),
            q.alpha_plus.into(),
            q.alpha_star.into(),
            c.is_some().into(),
            c.map(|c| c.omega).into(),
            c.map(|c| c.transversality.direct).into(),
            c.map(|c| c.transversality.closed_form).into(),
            c.map_or(Cell::Missing, |c| Cell::Int(c.codimension.into())),
        ]);
    }
    ctx.table("hopf", &t)
}

fn lyapunov(ctx: &mut Ctx) -> Result<(), Failure> {
    let p = ctx.params;
    let mut t = Table::new(["index", "E1", "E2", "M", "omega", "l1", "l2", "criticality"]);
    let mut reasons = Vec::new();
    for (i, eq) in coexistence_equilibria(&p).iter().enumerate() {
        match lyapunov_pair(&p, eq) {
            Ok(nf) => {
                let s = eq.state;
                t.push(vec![
                    (i + 1).into(),
                    s.e1.into(),
                    s.e2.into(),
                    s.m.into(),
                    nf.omega.into(),
                    nf.l1.into(),
                    nf.l2.into(),
                    criticality_verdict(nf.l1, nf.l2).as_str().into(),
                ]);
            }
            Err(e) => reasons.push(format!("equilibrium {}: {e}", i + 1)),
        }
    }
    if t.rows.is_empty() {
        let detail = if reasons.is_empty() {
            "no coexistence equilibrium".to_owned()
        } else {
            reasons.join("; ")
        };
        return Err(Failure::numerical(format!("no equilibrium at a Hopf point ({detail})")));
    }
    ctx.table("lyapunov", &t)
}

fn continuation_spec(ctx: &Ctx) -> Result<(ContinuationSpec, Vec<(ParamName, (f64, f64))>, StepControl), Failure> {
    let spec = Scenario::section(&ctx.scenario.continuation, "continuation")?.clone();
    let free = spec.free_params()?;
    let step = spec.step_control()?;
    Ok((spec, free, step))
}

/// Start equilibria in search order: an explicit state or index wins;
/// otherwise non-saddles come first, closest to a Hopf point first.
fn start_equilibria(
    p: &ModelParams,
    start: Option<[f64; 3]>,
    index: Option<usize>,
) -> Result<Vec<Equilibrium>, Failure> {
    if let Some([e1, e2, m]) = start {
        let s = newton_polish(p, State::new(e1, e2, m));
        let r = residual(p, &s)?;
        if !(r < START_TOL) {
            return Err(Failure::numerical(format!(
                "start state does not converge to an equilibrium (residual {r:e})"
            )));
        }
        return Ok(vec![Equilibrium::simple(s, EquilibriumKind::Coexistence)]);
    }
    let eqs = coexistence_equilibria(p);
    if let Some(i) = index {
        return eqs.get(i.wrapping_sub(1)).map(|e| vec![*e]).ok_or_else(|| {
            Failure::Input(format!(
                "schema violation: equilibrium index {i} out of range (found {})",
                eqs.len()
            ))
        });
    }
    if eqs.is_empty() {
        return Err(Failure::numerical(
            "no coexistence equilibrium at the scenario parameters",
        ));
    }
    let mut keyed: Vec<(bool, f64, Equilibrium)> = eqs
        .into_iter()
        .map(|e| match char_coeffs(p, &e) {
            Ok(cc) => (cc.a0 <= 0.0, cc.hopf_function().abs() / cc.scale(), e),
            Err(_) => (true, f64::INFINITY, e),
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

fn equilibrium_branch(ctx: &Ctx) -> Result<Branch, Failure> {
    let (spec, free, step) = continuation_spec(ctx)?;
    if free.len() != 1 {
        return Err(Failure::Input(
            "schema violation: continue-eq takes exactly one free parameter".into(),
        ));
    }
    let (name, range) = free[0];
    let eq = match (spec.start, spec.equilibrium) {
        (None, None) => start_equilibria(&ctx.params, None, Some(1))?,
        (s, i) => start_equilibria(&ctx.params, s, i)?,
    };
    Ok(continue_equilibrium(&ctx.params, &eq[0], name, range, step)?)
}

/// A Hopf point of `p` along `free`: Newton from each start equilibrium
/// first, then a scan of the equilibrium branches over `range`.
fn find_hopf(
    p: &ModelParams,
    starts: &[Equilibrium],
    free: ParamName,
    range: (f64, f64),
) -> Result<BifurcationEvent, Failure> {
    let inside = |e: &BifurcationEvent| e.location.param(free).is_some_and(|v| v >= range.0 && v <= range.1);
    for eq in starts {
        if let Ok(h) = locate_hopf(p, &eq.state, free) {
            if inside(&h) {
                return Ok(h);
            }
        }
    }
    let here = p.get(free);
    let mut best: Option<BifurcationEvent> = None;
    for eq in starts {
        let Ok(b) = continue_equilibrium(p, eq, free, range, StepControl::default()) else {
            continue;
        };
        for h in b.events_of(EventKind::H) {
            let d = |e: &BifurcationEvent| (e.location.param(free).unwrap_or(f64::NAN) - here).abs();
            if best.as_ref().is_none_or(|cur| d(h) < d(cur)) {
                best = Some(h.clone());
            }
        }
    }
    best.ok_or_else(|| {
        Failure::numerical(format!(
            "no Hopf point found along {} in [{}, {}]",
            free.as_str(),
            range.0,
            range.1
        ))
    })
}

fn hopf_branch(ctx: &Ctx) -> Result<Branch, Failure> {
    let (spec, free, step) = continuation_spec(ctx)?;
    if free.len() != 2 {
        return Err(Failure::Input(
            "schema violation: continue-hopf takes exactly two free parameters".into(),
        ));
    }
    let p = ctx.params;
    let starts = start_equilibria(&p, spec.start, spec.equilibrium)?;
    let h = find_hopf(&p, &starts, free[0].0, free[0].1)?;
    Ok(continue_hopf(
        &p,
        &h,
        [free[0].0, free[1].0],
        [free[0].1, free[1].1],
        step,
    )?)
}

fn branch_table(b: &Branch) -> Table {
    let mut header = vec!["s".to_owned()];
    header.extend(b.free_params.iter().map(|n| n.as_str().to_owned()));
    header.extend(
        ["E1", "E2", "M", "A0", "A1", "A2", "tau_LP", "tau_H", "l1"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut t = Table::new(header);
    for q in &b.points {
        let mut row: Vec<Cell> = vec![q.s.into()];
        row.extend(q.params.iter().map(|&v| Cell::from(v)));
        row.extend([
            q.state.e1.into(),
            q.state.e2.into(),
            q.state.m.into(),
            q.coeffs.a0.into(),
            q.coeffs.a1.into(),
            q.coeffs.a2.into(),
            q.tau_lp.into(),
            q.tau_h.into(),
            q.l1.into(),
        ]);
        t.push(row);
    }
    t
}

fn emit_branch(ctx: &mut Ctx, b: &Branch) -> Result<(), Failure> {
    ctx.table("branch", &branch_table(b))?;
    ctx.file("events.json", &events_json(&b.events))?;
    if b.terminated {
        return Err(Failure::Numerical {
            message: "continuation corrector failed before the range was covered".into(),
            events: b.events.clone(),
        });
    }
    Ok(())
}

fn cycles(ctx: &mut Ctx) -> Result<(), Failure> {
    let spec = Scenario::section(&ctx.scenario.cycles, "cycles")?.clone();
    let free = parse_name(&spec.free)?;
    let step = spec.step_control()?;
    let p = ctx.params;
    let search = (spec.search_range[0], spec.search_range[1]);
    if !(search.0 < search.1) {
        return Err(Failure::Input("schema violation: empty search_range".into()));
    }
    let starts = start_equilibria(&p, None, spec.equilibrium)?;
    let h = find_hopf(&p, &starts, free, search)?;
    let cfg = ShootingConfig::default();
    let lc = find_limit_cycle(&p, &h, spec.offset, &cfg).map_err(|e| Failure::Numerical {
        message: e.to_string(),
        events: vec![h.clone()],
    })?;
    let mut t = Table::new([
        "s",
        free.as_str(),
        "period",
        "amplitude",
        "E1",
        "E2",
        "M",
        "dominant_multiplier",
        "stable",
    ]);
    let mut events = vec![h];
    let mut terminated = false;
    match spec.range {
        None => {
            let a = lc.anchor;
            let dominant = lc.floquet[1].norm().max(lc.floquet[2].norm());
            t.push(vec![
                0.0.into(),
                lc.params.get(free).into(),
                lc.period.into(),
                lc.amplitude.into(),
                a.e1.into(),
                a.e2.into(),
                a.m.into(),
                dominant.into(),
                lc.stable.into(),
            ]);
        }
        Some(r) => {
            if !(r[0] < r[1]) {
                return Err(Failure::Input("schema violation: empty cycle range".into()));
            }
            let fam = cycle_family_sweep(&lc, free, (r[0], r[1]), step, spec.max_points, &cfg)?;
            for q in &fam.points {
                t.push(vec![
                    q.s.into(),
                    q.param.into(),
                    q.period.into(),
                    q.amplitude.into(),
                    q.anchor.e1.into(),
                    q.anchor.e2.into(),
                    q.anchor.m.into(),
                    q.dominant_multiplier.into(),
                    q.stable.into(),
                ]);
            }
            events.extend(fam.events.iter().cloned());
            terminated = fam.terminated;
        }
    }
    ctx.table("cycles", &t)?;
    ctx.file("events.json", &events_json(&events))?;
    if terminated {
        return Err(Failure::Numerical {
            message: "cycle continuation failed before the range was covered".into(),
            events,
        });
    }
    Ok(())
}

/// Routh-Hurwitz stability of a branch row.
fn row_stable(b: &Branch, i: usize) -> bool {
    let cc = &b.points[i].coeffs;
    cc.a0 > 0.0 && cc.a2 > 0.0 && b.points[i].tau_h > 0.0
}

fn figure(ctx: &mut Ctx) -> Result<(), Failure> {
    let spec = Scenario::section(&ctx.scenario.figure, "figure")?.clone();
    let result = match spec.source {
        FigureSource::ContinueEq => equilibrium_branch(ctx),
        FigureSource::ContinueHopf => hopf_branch(ctx),
    };
    let b = result?;
    let t = branch_table(&b);
    let x_name = spec.x.clone().unwrap_or_else(|| b.free_params[0].as_str().to_owned());
    let column = |name: &str| {
        t.header.iter().position(|h| h == name).ok_or_else(|| {
            Failure::Input(format!(
                "schema violation: no branch column {name:?}; have {:?}",
                t.header
            ))
        })
    };
    let (xi, yi) = (column(&x_name)?, column(&spec.y)?);
    let value = |row: &[Cell], j: usize| match row[j] {
        Cell::Num(v) => v,
        _ => f64::NAN,
    };
    let points: Vec<(f64, f64)> = t.rows.iter().map(|r| (value(r, xi), value(r, yi))).collect();

    let mut curves: Vec<Curve> = Vec::new();
    let equilibrium_source = spec.source == FigureSource::ContinueEq;
    for (i, &pt) in points.iter().enumerate() {
        let dashed = equilibrium_source && !row_stable(&b, i);
        match curves.last_mut() {
            Some(c) if c.dashed == dashed => c.points.push(pt),
            Some(c) => {
                let prev = *c.points.last().expect("curves are never empty");
                curves.push(Curve {
                    points: vec![prev, pt],
                    dashed,
                });
            }
            None => curves.push(Curve {
                points: vec![pt],
                dashed,
            }),
        }
    }

    let markers = b
        .events
        .iter()
        .filter_map(|e| {
            let dist = |i: usize| {
                let q = &b.points[i];
                let dp: f64 = b
                    .free_params
                    .iter()
                    .zip(&q.params)
                    .map(|(n, v)| (e.location.param(*n).unwrap_or(*v) - v).abs())
                    .sum();
                let ds = (q.state.to_vector() - e.location.state.to_vector()).norm();
                dp + ds
            };
            let i = (0..b.points.len()).min_by(|&i, &j| dist(i).total_cmp(&dist(j)))?;
            Some(Marker {
                x: points[i].0,
                y: points[i].1,
                label: e.kind.as_str().to_owned(),
            })
        })
        .collect();

    let fig = Figure {
        x_label: x_name,
        y_label: spec.y.clone(),
        curves,
        markers,
    };
    ctx.file("figure.svg", &fig.render())?;
    ctx.file("events.json", &events_json(&b.events))?;
    if b.terminated {
        return Err(Failure::Numerical {
            message: "continuation corrector failed before the range was covered".into(),
            events: b.events.clone(),
        });
    }
    Ok(())
}
