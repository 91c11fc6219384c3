use std::fmt::Write as _;

use ellqg::ellfn::{rho_plus, theta};
use ellqg::gtrep::{e_on_gt, f_on_gt, gt_basis, phi_on_gt, CurrentActionResult, PhiSign};
use ellqg::qkz::{integrand_parts, torus_grid, torus_quadrature, IntegrandSpec, Kernel};
use ellqg::rmat::rbar;
use ellqg::tensorspace::{enumerate, index_from_colors, ColorString, PartitionIndex, DEFAULT_ENUMERATION_CAP};
use ellqg::verify::{run_suite, Suite, SuiteReport, TOL_DIAGONAL, TOL_OFF_TRIANGLE, TOL_TRANSITION};
use ellqg::weightfn::{
    specialize, stable_envelope_restriction, transition_check, triangularity_report, w_tilde, Chamber, TVariables,
};
use ellqg::Complex64;
use serde_json::{json, Value};

use crate::config::{parse_complex, Format, RunConfig};
use crate::{CliError, Command, GtOp, Output, QkzArgs, QkzOp, WfOp};

fn cj(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn render(v: Value, pass: bool) -> Output {
    let mut text = serde_json::to_string_pretty(&v).expect("json values always serialize");
    text.push('\n');
    Output { text, pass }
}

fn json_only(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    match cfg.format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("{what}: csv output is not available, use --format json"))),
    }
}

fn complex_arg(s: &str, flag: &str) -> Result<Complex64, CliError> {
    parse_complex(s).ok_or_else(|| CliError::Usage(format!("{flag}: cannot parse `{s}` as a complex number")))
}

fn index_arg(s: &str, cfg: &RunConfig, flag: &str) -> Result<PartitionIndex, CliError> {
    let colors = s
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("{flag}: expected a comma-separated color string, got `{s}`")))?;
    let rank = cfg.lambda.rank();
    let mu = ColorString::new(colors, rank).map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    let idx = index_from_colors(&mu, rank).map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    if idx.lambda() != cfg.lambda {
        return Err(CliError::Usage(format!(
            "{flag}: `{s}` has shape {:?}, the config has λ = {:?}",
            idx.lambda().parts(),
            cfg.lambda.parts()
        )));
    }
    Ok(idx)
}

fn colors_label(i: &PartitionIndex) -> String {
    i.colors().colors().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

/// The config's `t`, or a fixed generic point when it is absent.
fn t_or_default(cfg: &RunConfig, radius: f64) -> Result<TVariables, CliError> {
    if let Some(t) = &cfg.t {
        return Ok(t.clone());
    }
    let lambda = &cfg.lambda;
    let levels = (1..lambda.rank())
        .map(|l| {
            (0..lambda.partial(l))
                .map(|a| Complex64::from_polar(radius, 0.5 + 1.3 * a as f64 + 0.7 * l as f64))
                .collect()
        })
        .collect();
    Ok(TVariables::new(levels, lambda)?)
}

pub fn dispatch(cmd: &Command, cfg: &RunConfig, break_shift: bool) -> Result<Output, CliError> {
    match cmd {
        Command::Theta { u } => theta_cmd(cfg, u),
        Command::Rmat { z, starred, plus } => rmat_cmd(cfg, z.as_deref(), *starred, *plus),
        Command::Wf { op } => wf_cmd(cfg, op),
        Command::Gt { op } => gt_cmd(cfg, op, break_shift),
        Command::Qkz { op } => qkz_cmd(cfg, op),
        Command::Verify { suite } => {
            let suite: Suite = suite.parse().map_err(|e: ellqg::Error| CliError::Usage(e.to_string()))?;
            verify_cmd(cfg, suite, break_shift)
        }
    }
}

fn theta_cmd(cfg: &RunConfig, u: &[String]) -> Result<Output, CliError> {
    let mp = &cfg.mp;
    let points: Vec<Complex64> = if u.is_empty() {
        cfg.z.additive(mp)
    } else {
        u.iter().map(|s| complex_arg(s, "--u")).collect::<Result<_, _>>()?
    };
    let mut rows = Vec::with_capacity(points.len());
    for &x in &points {
        let th = theta(mp.qpow(2.0 * x), mp.p(), &mp.truncation())?;
        rows.push((x, mp.bracket(x), mp.bracket_star(x), th));
    }
    match cfg.format {
        Format::Json => Ok(render(
            json!({
                "q": mp.q(), "r": mp.r(), "k": mp.k(), "p": mp.p(), "p_star": mp.p_star(),
                "values": rows.iter().map(|(x, b, bs, th)| json!({
                    "u": cj(*x), "bracket": cj(*b), "bracket_star": cj(*bs), "theta": cj(*th)
                })).collect::<Vec<_>>()
            }),
            true,
        )),
        Format::Csv => {
            let mut s = String::from("u_re,u_im,bracket_re,bracket_im,bracket_star_re,bracket_star_im,theta_re,theta_im\n");
            for (x, b, bs, th) in rows {
                let _ = writeln!(s, "{},{},{},{},{},{},{},{}", x.re, x.im, b.re, b.im, bs.re, bs.im, th.re, th.im);
            }
            Ok(Output { text: s, pass: true })
        }
    }
}

fn rmat_cmd(cfg: &RunConfig, z: Option<&str>, starred: bool, plus: bool) -> Result<Output, CliError> {
    let z = match z {
        Some(s) => complex_arg(s, "--z")?,
        None => cfg.z.points()[0],
    };
    let mut r = rbar(z, &cfg.pdyn, &cfg.mp, starred)?;
    if plus {
        r = r.scaled(rho_plus(z, cfg.pdyn.rank(), &cfg.mp)?);
    }
    let entries: Vec<_> = r.entries().collect();
    match cfg.format {
        Format::Json => Ok(render(
            json!({
                "N": r.rank(),
                "z": cj(z),
                "nome": if starred { "pstar" } else { "p" },
                "scalar": if plus { "rho_plus" } else { "none" },
                "entries": entries.iter().map(|((a, b), (c, d), v)| json!({
                    "in": [a, b], "out": [c, d], "re": v.re, "im": v.im
                })).collect::<Vec<_>>()
            }),
            true,
        )),
        Format::Csv => {
            let mut s = String::from("in1,in2,out1,out2,re,im\n");
            for ((a, b), (c, d), v) in entries {
                let _ = writeln!(s, "{a},{b},{c},{d},{},{}", v.re, v.im);
            }
            Ok(Output { text: s, pass: true })
        }
    }
}

fn wf_cmd(cfg: &RunConfig, op: &WfOp) -> Result<Output, CliError> {
    json_only(cfg, "wf")?;
    let (mp, z, pd) = (&cfg.mp, &cfg.z, &cfg.pdyn);
    match op {
        WfOp::Eval { colors, at } => {
            let i = index_arg(colors, cfg, "--colors")?;
            let (point, eval) = match at {
                Some(s) => {
                    let j = index_arg(s, cfg, "--at")?;
                    (json!({ "specialized_at": colors_label(&j) }), specialize(&i, &j, z, pd, mp)?)
                }
                None => {
                    let t = t_or_default(cfg, 0.7)?;
                    let levels: Vec<Vec<Value>> =
                        t.levels().iter().map(|lv| lv.iter().map(|x| cj(*x)).collect()).collect();
                    (json!({ "t": levels }), w_tilde(&i, &t, z, pd, mp)?)
                }
            };
            Ok(render(
                json!({
                    "colors": colors_label(&i),
                    "index": i.to_string(),
                    "point": point,
                    "value": cj(eval.value),
                    "terms_evaluated": eval.terms_evaluated,
                    "skipped_singular": eval.skipped_singular,
                }),
                true,
            ))
        }
        WfOp::Triangularity => {
            let rep = triangularity_report(&cfg.lambda, z, pd, mp)?;
            let pass = rep.max_off_triangle < TOL_OFF_TRIANGLE && rep.max_diagonal_rel < TOL_DIAGONAL;
            Ok(render(
                json!({
                    "lambda": cfg.lambda.parts(),
                    "pairs": rep.pairs,
                    "max_off_triangle": rep.max_off_triangle,
                    "off_triangle_tolerance": TOL_OFF_TRIANGLE,
                    "max_diagonal_rel": rep.max_diagonal_rel,
                    "diagonal_tolerance": TOL_DIAGONAL,
                    "pass": pass,
                }),
                pass,
            ))
        }
        WfOp::Transition => {
            let t = t_or_default(cfg, 0.7)?;
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for idx in enumerate(&cfg.lambda, DEFAULT_ENUMERATION_CAP)? {
                let mu = idx.colors();
                for i in 1..mu.len() {
                    let res = transition_check(&mu, i, &t, z, pd, mp)?;
                    worst = worst.max(res);
                    rows.push(json!({ "colors": colors_label(&idx), "i": i, "residual": res }));
                }
            }
            let pass = worst < TOL_TRANSITION;
            Ok(render(
                json!({ "max_residual": worst, "tolerance": TOL_TRANSITION, "pass": pass, "checks": rows }),
                pass,
            ))
        }
        WfOp::Stab => {
            let all = enumerate(&cfg.lambda, DEFAULT_ENUMERATION_CAP)?;
            let mut matrix = Vec::with_capacity(all.len());
            for i in &all {
                let mut row = Vec::with_capacity(all.len());
                for j in &all {
                    row.push(cj(stable_envelope_restriction(i, j, z, pd, mp, Chamber::Increasing)?));
                }
                matrix.push(row);
            }
            Ok(render(
                json!({
                    "chamber": "increasing",
                    "labels": all.iter().map(colors_label).collect::<Vec<_>>(),
                    "matrix": matrix,
                }),
                true,
            ))
        }
    }
}

fn action_json(res: &CurrentActionResult) -> Value {
    Value::Array(
        res.support
            .iter()
            .map(|s| {
                json!({
                    "site": s.site,
                    "point": cj(s.point),
                    "target": colors_label(&s.target),
                    "coefficient": cj(s.coefficient),
                    "eta_shift": s.eta_shift,
                })
            })
            .collect(),
    )
}

fn gt_cmd(cfg: &RunConfig, op: &GtOp, break_shift: bool) -> Result<Output, CliError> {
    let (mp, z, pd) = (&cfg.mp, &cfg.z, &cfg.pdyn);
    match op {
        GtOp::Basis => {
            json_only(cfg, "gt basis")?;
            let (all, m) = gt_basis(&cfg.lambda, z, pd, mp)?;
            Ok(render(
                json!({
                    "labels": all.iter().map(colors_label).collect::<Vec<_>>(),
                    "rows": "row a holds the coefficients of v_{J_b} in xi_{I_a}",
                    "matrix": m.to_rows().iter().map(|r| r.iter().map(|x| cj(*x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                }),
                true,
            ))
        }
        GtOp::Act { op, j, colors, w, sign } => {
            json_only(cfg, "gt act")?;
            let i = index_arg(colors, cfg, "--colors")?;
            let body = match op.as_str() {
                "e" => json!({ "op": "e", "support": action_json(&e_on_gt(*j, &i, z, mp)?) }),
                "f" => json!({ "op": "f", "support": action_json(&f_on_gt(*j, &i, z, mp)?) }),
                _ => {
                    let w = complex_arg(w.as_deref().ok_or_else(|| CliError::Usage("--op phi needs --w".into()))?, "--w")?;
                    let sign = if sign == "minus" { PhiSign::Minus } else { PhiSign::Plus };
                    let eig = phi_on_gt(*j, w, &i, z, mp, sign)?;
                    json!({
                        "op": "phi", "sign": sign_label(sign), "w": cj(w),
                        "eigenvalue": cj(eig.eigenvalue), "eta_shift": eig.eta_shift
                    })
                }
            };
            let mut out = json!({ "j": j, "colors": colors_label(&i) });
            if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
                o.extend(b);
            }
            Ok(render(out, true))
        }
        GtOp::Verify => verify_cmd(cfg, Suite::Gt, break_shift),
    }
}

fn sign_label(s: PhiSign) -> &'static str {
    match s {
        PhiSign::Plus => "plus",
        PhiSign::Minus => "minus",
    }
}

fn qkz_spec(cfg: &RunConfig, args: &QkzArgs) -> Result<IntegrandSpec, CliError> {
    let i = match &args.colors {
        Some(s) => index_arg(s, cfg, "--colors")?,
        None => enumerate(&cfg.lambda, DEFAULT_ENUMERATION_CAP)?.remove(0),
    };
    let kernel = match (args.trig, cfg.trace_nome) {
        (false, Some(q)) => Kernel::Elliptic { trace_nome: q },
        _ => Kernel::Trig,
    };
    let spec = IntegrandSpec::new(i, kernel, cfg.pdyn.clone(), cfg.z.clone(), cfg.mp)?;
    match &args.cycle {
        Some(s) => {
            if kernel == Kernel::Trig {
                return Err(CliError::Usage("--cycle needs the elliptic kernel (set Q, drop --trig)".into()));
            }
            Ok(spec.with_cycle(index_arg(s, cfg, "--cycle")?)?)
        }
        None => Ok(spec),
    }
}

fn kernel_json(k: Kernel) -> Value {
    match k {
        Kernel::Elliptic { trace_nome } => json!({ "kind": "elliptic", "Q": trace_nome }),
        Kernel::Trig => json!({ "kind": "trig" }),
    }
}

fn qkz_cmd(cfg: &RunConfig, op: &QkzOp) -> Result<Output, CliError> {
    match op {
        QkzOp::Eval { args } => {
            json_only(cfg, "qkz eval")?;
            let spec = qkz_spec(cfg, args)?;
            let t = t_or_default(cfg, 1.0)?;
            let parts = integrand_parts(&spec, &t)?;
            Ok(render(
                json!({
                    "colors": colors_label(spec.cocycle()),
                    "cycle": spec.cycle().map(colors_label),
                    "kernel": kernel_json(spec.kernel()),
                    "t": t.levels().iter().map(|lv| lv.iter().map(|x| cj(*x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    "e": cj(parts.e),
                    "phi": cj(parts.phi),
                    "w_cocycle": cj(parts.w_cocycle),
                    "w_cycle": parts.w_cycle.map(cj),
                    "value": cj(parts.value),
                }),
                true,
            ))
        }
        QkzOp::Grid { args, m0 } => {
            let spec = qkz_spec(cfg, args)?;
            let grid = torus_grid(&spec, *m0)?;
            match cfg.format {
                Format::Csv => {
                    let dim = spec.dimension();
                    let mut s = String::new();
                    for v in 1..=dim {
                        let _ = write!(s, "t{v}_re,t{v}_im,");
                    }
                    s.push_str("re,im\n");
                    for (t, val) in grid {
                        for x in t {
                            let _ = write!(s, "{},{},", x.re, x.im);
                        }
                        let _ = writeln!(s, "{},{}", val.re, val.im);
                    }
                    Ok(Output { text: s, pass: true })
                }
                Format::Json => Ok(render(
                    json!({
                        "kernel": kernel_json(spec.kernel()),
                        "m0": m0,
                        "nodes": grid.iter().map(|(t, v)| json!({
                            "t": t.iter().map(|x| cj(*x)).collect::<Vec<_>>(), "value": cj(*v)
                        })).collect::<Vec<_>>(),
                    }),
                    true,
                )),
            }
        }
        QkzOp::Quad { args, m0 } => {
            json_only(cfg, "qkz quad")?;
            let spec = qkz_spec(cfg, args)?;
            let r = torus_quadrature(&spec, *m0)?;
            Ok(render(
                json!({
                    "colors": colors_label(spec.cocycle()),
                    "cycle": spec.cycle().map(colors_label),
                    "kernel": kernel_json(spec.kernel()),
                    "dimension": r.dimension,
                    "grid": r.grid,
                    "coarse": cj(r.coarse),
                    "fine": cj(r.fine),
                    "difference": r.difference,
                    "relative_difference": r.relative_difference,
                    "trapezoid_coarse": cj(r.trapezoid_coarse),
                    "trapezoid_fine": cj(r.trapezoid_fine),
                }),
                true,
            ))
        }
    }
}

fn verify_cmd(cfg: &RunConfig, suite: Suite, break_shift: bool) -> Result<Output, CliError> {
    let report: SuiteReport = run_suite(suite, &cfg.suite_config(break_shift)?);
    let pass = report.pass;
    match cfg.format {
        Format::Json => {
            let checks: Vec<Value> = report
                .checks
                .iter()
                .map(|c| {
                    let mut v = json!({
                        "id": c.id,
                        "residual": if c.residual.is_finite() { json!(c.residual) } else { Value::Null },
                        "tolerance": c.tolerance,
                        "pass": c.pass,
                    });
                    if let Some(e) = &c.error {
                        v["error"] = json!(e);
                    }
                    v
                })
                .collect();
            Ok(render(
                json!({
                    "suite": report.suite.to_string(),
                    "seed": report.seed,
                    "break_shift": break_shift,
                    "pass": pass,
                    "checks": checks,
                }),
                pass,
            ))
        }
        Format::Csv => {
            let mut s = String::from("id,residual,tolerance,pass\n");
            for c in &report.checks {
                let _ = writeln!(s, "{},{:e},{:e},{}", c.id, c.residual, c.tolerance, c.pass);
            }
            Ok(Output { text: s, pass })
        }
    }
}
