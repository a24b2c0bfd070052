use std::path::{Path, PathBuf};
use std::sync::Arc;

use parweight::bmo::{jn_decay_fit, member_oscillation, pbmo_seminorm, weight_to_bmo};
use parweight::construct::{
    cr_weight, heat_residual, supersolution, supersolution_representation, MeasurePath, MeasureSpec, PointMass,
    RepresentationOptions, SupersolutionSpec,
};
use parweight::factorize::{factorize as run_factorize, FactorizeOptions};
use parweight::geometry::enumerate_family;
use parweight::gridfn::{read_csv_file, to_csv_string, DEFAULT_FLOOR_EPS};
use parweight::maximal::{dyadic_scales, maximal as run_maximal};
use parweight::synthetic::Synthetic;
use parweight::weights::{a1_constant, aq_constant, history_verdict, reverse_holder};
use parweight::{
    Direction, Error, EvalPath, Exponents64, GridFunction64, GridSpec64, RectangleFamily64, SpaceTimeBox64,
};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::output::{companion, to_json, Batch, SCHEMA_VERSION};
use crate::{Common, ConstructArgs, ConstructKind, DirectionArg, Failure, SupersolutionKind};

type Outcome = Result<(), Failure>;

fn numerical(e: Error) -> Failure {
    match e {
        Error::Io(e) => Failure::Data(e.to_string()),
        Error::Stage { stage, source } => match numerical(*source) {
            Failure::Numerical(m) => Failure::Numerical(format!("stage `{stage}`: {m}")),
            other => other,
        },
        other => Failure::Numerical(other.to_string()),
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: Error) -> Failure {
    Failure::Data(e.to_string())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialise")
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Backward => Direction::Backward,
        }
    }
}

/// Checks every parameter before any computation starts.
fn validate(c: &Common) -> Result<Exponents64, Failure> {
    let exps = Exponents64::new(c.p, c.q, c.gamma).map_err(usage)?;
    if c.scales == 0 {
        return Err(Failure::Usage("--scales must be at least 1".into()));
    }
    if !(c.stride > 0.0 && c.stride <= 1.0) {
        return Err(Failure::Usage(format!("--stride {} must lie in (0, 1]", c.stride)));
    }
    if !(c.tol > 0.0 && c.tol < 1.0) {
        return Err(Failure::Usage(format!("--tol {} must lie in (0, 1)", c.tol)));
    }
    if c.cells == 0 || c.time_cells == 0 || !(c.x_extent > 0.0) || !(c.t_extent > 0.0) {
        return Err(Failure::Usage("synthetic grid dimensions must be positive".into()));
    }
    if let Some(name) = &c.synthetic {
        name.parse::<Synthetic>().map_err(usage)?;
    }
    Ok(exps)
}

fn synthetic_grid(c: &Common) -> Result<Arc<GridSpec64>, Failure> {
    let domain = SpaceTimeBox64::new(vec![0.0], vec![c.x_extent], 0.0, c.t_extent).map_err(usage)?;
    Ok(GridSpec64::new(vec![c.cells], c.time_cells, domain).map_err(usage)?.into())
}

/// Description of the input for the report.
fn input_value(c: &Common) -> Value {
    json!({
        "grid": c.grid.as_ref().map(|p| p.display().to_string()),
        "synthetic": c.synthetic,
        "seed": c.seed,
    })
}

/// The input grid function: a CSV file or a named generator.
fn load(c: &Common) -> Result<GridFunction64, Failure> {
    match (&c.grid, &c.synthetic) {
        (Some(_), Some(_)) => Err(Failure::Usage("--grid and --synthetic are exclusive".into())),
        (None, None) => Err(Failure::Usage("an input is required: --grid <csv> or --synthetic <name>".into())),
        (Some(path), None) => read_csv(path),
        (None, Some(name)) => {
            let generator: Synthetic = name.parse().map_err(usage)?;
            generator.generate(&synthetic_grid(c)?, c.seed).map_err(numerical)
        }
    }
}

fn read_csv(path: &Path) -> Result<GridFunction64, Failure> {
    read_csv_file::<f64>(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_weight(c: &Common) -> Result<GridFunction64, Failure> {
    let f = load(c)?;
    if let Some(i) = f.values().iter().position(|v| *v < 0.0) {
        return Err(Failure::Data(format!("weight is negative at cell {i}")));
    }
    GridFunction64::weight(f.shared_spec(), f.values().to_vec(), DEFAULT_FLOOR_EPS).map_err(data)
}

fn families(c: &Common, spec: &GridSpec64, p: f64) -> Result<Vec<RectangleFamily64>, Failure> {
    let mut out = Vec::new();
    for k in 1..=c.scales {
        match enumerate_family(spec.domain(), spec, p, k, c.stride) {
            Ok(f) => out.push(f),
            Err(Error::EmptyFamily) => {}
            Err(e) => return Err(usage(e)),
        }
    }
    if out.is_empty() {
        return Err(Failure::Numerical(Error::EmptyFamily.to_string()));
    }
    Ok(out)
}

fn eval_path(c: &Common) -> EvalPath {
    if c.oracle {
        EvalPath::Naive
    } else {
        EvalPath::Prefix
    }
}

fn header(command: &str, c: &Common, exps: &Exponents64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schemaVersion".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command));
    m.insert("input".into(), input_value(c));
    m.insert("exponents".into(), to_value(exps));
    m
}

fn grid_value(spec: &GridSpec64) -> Value {
    json!({
        "cellsPerAxis": spec.cells_per_axis(),
        "timeCells": spec.time_cells(),
        "domain": to_value(spec.domain()),
    })
}

/// Writes companion grids and then the report, or prints the report when
/// no output path is given.
fn emit(c: &Common, report: Map<String, Value>, grids: &[(&str, &GridFunction64)]) -> Outcome {
    let mut report = report;
    let Some(out) = &c.out else {
        print!("{}", to_json(&Value::Object(report)));
        return Ok(());
    };
    let mut outputs = Map::new();
    let mut batch = Batch::default();
    for (name, g) in grids {
        let path = companion(out, name);
        batch.stage(&path, to_csv_string(g).as_bytes()).map_err(|e| Failure::Data(e.to_string()))?;
        outputs.insert((*name).into(), json!(path.file_name().unwrap().to_string_lossy()));
    }
    if !grids.is_empty() {
        report.insert("outputs".into(), Value::Object(outputs));
    }
    batch.stage(out, to_json(&Value::Object(report)).as_bytes()).map_err(|e| Failure::Data(e.to_string()))?;
    batch.commit().map_err(|e| Failure::Data(e.to_string()))
}

fn history_entry(history: &[f64], report: Value) -> Value {
    json!({
        "constant": history.last().copied(),
        "history": history,
        "verdict": to_value(&history_verdict(history)),
        "report": report,
    })
}

pub fn classify(c: &Common) -> Outcome {
    let exps = validate(c)?;
    let w = load_weight(c)?;
    let fams = families(c, w.spec(), exps.p())?;
    let last = fams.last().unwrap();
    let mut qs = vec![1.5, 2.0, 3.0, 4.0, exps.q()];
    qs.sort_by(f64::total_cmp);
    qs.dedup();

    let mut aq = Vec::new();
    for &q in &qs {
        let e = exps.with_q(q).map_err(usage)?;
        let mut history = Vec::new();
        let mut report = Value::Null;
        for f in &fams {
            let r = aq_constant(&w, &e, Direction::Forward, f).map_err(numerical)?;
            history.push(r.constant);
            report = to_value(&r);
        }
        let mut entry = history_entry(&history, report);
        entry.as_object_mut().unwrap().insert("q".into(), json!(q));
        aq.push(entry);
    }

    let mut a1 = Map::new();
    for dir in [Direction::Forward, Direction::Backward] {
        let mut history = Vec::new();
        let mut report = Value::Null;
        for f in &fams {
            let r = a1_constant(&w, &exps, dir, &f.provenance.scales, None, eval_path(c)).map_err(numerical)?;
            history.push(r.constant);
            report = to_value(&r);
        }
        a1.insert(dir.sign().to_string(), history_entry(&history, report));
    }

    let mut rh = Vec::new();
    for delta in [0.1, 0.25, 0.5, 1.0] {
        let mut history = Vec::new();
        for f in &fams {
            history.push(reverse_holder(&w, &exps, delta, f).map_err(numerical)?.constant);
        }
        let mut entry = history_entry(&history, Value::Null);
        let obj = entry.as_object_mut().unwrap();
        obj.remove("report");
        obj.insert("delta".into(), json!(delta));
        rh.push(entry);
    }

    let mut report = header("classify", c, &exps);
    report.insert("grid".into(), grid_value(w.spec()));
    report.insert("family".into(), to_value(&last.provenance));
    report.insert("familySize".into(), json!(last.len()));
    report.insert("historyKind".into(), json!("scaleCount"));
    report.insert("aq".into(), Value::Array(aq));
    report.insert("a1".into(), Value::Object(a1));
    report.insert("reverseHolder".into(), Value::Array(rh));
    emit(c, report, &[])
}

fn base_scales(c: &Common, spec: &GridSpec64) -> Vec<f64> {
    let base = (0..spec.n()).map(|a| spec.cell_width(a)).fold(0.0, f64::max);
    dyadic_scales(base, c.scales)
}

pub fn maximal(c: &Common, direction: DirectionArg) -> Outcome {
    let exps = validate(c)?;
    let f = load(c)?;
    let scales = base_scales(c, f.spec());
    let m = run_maximal(&f, &exps, direction.into(), &scales, eval_path(c)).map_err(numerical)?;
    let values: Vec<f64> = (0..f.len()).map(|i| if m.valid[i] { m.output.get(i) } else { 0.0 }).collect();
    let out = f.with_values(values).map_err(numerical)?;
    let mask = f.with_values(m.valid.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect()).map_err(numerical)?;
    let valid: Vec<f64> = m.valid_values().collect();
    let mut report = header("maximal", c, &exps);
    report.insert("grid".into(), grid_value(f.spec()));
    report.insert("direction".into(), to_value(&m.direction));
    report.insert("scales".into(), json!(scales));
    report.insert("evalPath".into(), to_value(&eval_path(c)));
    report.insert("validCells".into(), json!(valid.len()));
    report.insert("totalCells".into(), json!(f.len()));
    report.insert("max".into(), json!(valid.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    report.insert("min".into(), json!(valid.iter().copied().fold(f64::INFINITY, f64::min)));
    emit(c, report, &[("maximal", &out), ("mask", &mask)])
}

pub fn factorize(c: &Common) -> Outcome {
    let exps = validate(c)?;
    let w = load_weight(c)?;
    let fams = families(c, w.spec(), exps.p())?;
    let mut opts = FactorizeOptions::new(fams.last().unwrap().provenance.scales.clone());
    opts.tol = c.tol;
    opts.seed = c.seed;
    opts.path = eval_path(c);
    let r = run_factorize(&w, &exps, &opts).map_err(numerical)?;
    let mut report = header("factorize", c, &exps);
    report.insert("grid".into(), grid_value(w.spec()));
    report.insert("scales".into(), json!(opts.scales));
    report.insert("result".into(), to_value(&r));
    emit(c, report, &[("u", &r.u), ("v", &r.v)])
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct MeasureFile {
    schema_version: Option<u64>,
    #[serde(default)]
    points: Vec<PointFile>,
    density: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    x: Vec<f64>,
    t: f64,
    mass: f64,
}

fn read_measure(path: &Path, spec: &Arc<GridSpec64>) -> Result<MeasureSpec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let file: MeasureFile =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if let Some(v) = file.schema_version.filter(|v| *v > SCHEMA_VERSION) {
        return Err(Failure::Data(format!("measure schema version {v} is newer than {SCHEMA_VERSION}")));
    }
    if file.points.iter().any(|p| p.x.len() != spec.n()) {
        return Err(Failure::Data("point mass dimension does not match the grid".into()));
    }
    let density = match file.density {
        Some(rel) => {
            let full: PathBuf = path.parent().unwrap_or(Path::new(".")).join(rel);
            let d = read_csv(&full)?;
            if d.spec() != spec.as_ref() {
                return Err(Failure::Data("density grid differs from the working grid".into()));
            }
            Some(GridFunction64::new(spec.clone(), d.into_values()).map_err(data)?)
        }
        None => None,
    };
    let points = file.points.into_iter().map(|p| PointMass { x: p.x, t: p.t, mass: p.mass }).collect();
    MeasureSpec::new(points, density).map_err(data)
}

/// Grid for constructions: that of `--grid` if given, else the synthetic one.
fn working_grid(c: &Common) -> Result<Arc<GridSpec64>, Failure> {
    match &c.grid {
        Some(path) => Ok(read_csv(path)?.shared_spec()),
        None => synthetic_grid(c),
    }
}

pub fn construct(c: &Common, args: &ConstructArgs) -> Outcome {
    let exps = validate(c)?;
    match args.kind {
        ConstructKind::CrWeight => construct_cr(c, args, &exps),
        ConstructKind::Supersolution => construct_supersolution(c, args, &exps),
    }
}

fn construct_cr(c: &Common, args: &ConstructArgs, exps: &Exponents64) -> Outcome {
    if !(0.0..1.0).contains(&args.delta) {
        return Err(Failure::Usage(format!("--delta {} must lie in [0, 1)", args.delta)));
    }
    let path = args.measure.as_ref().ok_or_else(|| Failure::Usage("cr-weight needs --measure <json>".into()))?;
    let spec = working_grid(c)?;
    let m = read_measure(path, &spec)?;
    let scales = base_scales(c, &spec);
    let w = cr_weight(&m, args.delta, &spec, exps, &scales, MeasurePath::Binned).map_err(numerical)?;
    let a1 = a1_constant(&w.weight, exps, Direction::Forward, &scales, Some(&w.valid), eval_path(c)).map_err(numerical)?;
    let mut report = header("construct", c, exps);
    report.insert("kind".into(), json!("crWeight"));
    report.insert("grid".into(), grid_value(&spec));
    report.insert("delta".into(), json!(args.delta));
    report.insert("scales".into(), json!(scales));
    report.insert("pointMasses".into(), to_value(&m.points));
    report.insert("clamped".into(), json!(w.clamped));
    report.insert("extended".into(), json!(w.extended));
    report.insert("a1".into(), to_value(&a1));
    emit(c, report, &[("weight", &w.weight)])
}

fn construct_supersolution(c: &Common, args: &ConstructArgs, exps: &Exponents64) -> Outcome {
    let spec = working_grid(c)?;
    let kind = match args.family {
        SupersolutionKind::IncreasingTime => SupersolutionSpec::IncreasingTime { rate: args.rate },
        SupersolutionKind::HeatKernel => {
            let d = spec.domain();
            let x0 = args.x0.clone().unwrap_or_else(|| {
                d.spatial_lo.iter().zip(&d.spatial_hi).map(|(a, b)| 0.5 * (a + b)).collect()
            });
            SupersolutionSpec::HeatKernel { x0, t0: args.t0 }
        }
    };
    let v = supersolution(&kind, &spec, exps).map_err(|e| match e {
        Error::Overflow(_) => numerical(e),
        other => usage(other),
    })?;
    let fams = families(c, &spec, exps.p())?;
    let family = fams.last().unwrap();
    let lagless = exps.with_gamma(0.0).map_err(usage)?;
    let mut aq = Map::new();
    for q in [1.5, 2.0, 4.0] {
        let e = exps.with_q(q).map_err(usage)?;
        aq.insert(format!("{q}"), json!(aq_constant(&v, &e, Direction::Forward, family).map_err(numerical)?.constant));
    }
    let u = weight_to_bmo(&v, 1.0).map_err(numerical)?;
    let pbmo = pbmo_seminorm(&u, &lagless, Direction::Forward, family).map_err(numerical)?;

    let mut report = header("construct", c, exps);
    report.insert("kind".into(), json!("supersolution"));
    report.insert("grid".into(), grid_value(&spec));
    report.insert("supersolution".into(), to_value(&kind));
    if matches!(kind, SupersolutionSpec::HeatKernel { .. }) {
        report.insert("heatResidual".into(), json!(heat_residual(&v).map_err(numerical)?));
    }
    report.insert("aq".into(), Value::Object(aq));
    report.insert("pbmoOfMinusLog".into(), json!(pbmo.seminorm));
    let mut grids = vec![("v", &v)];
    let mut reps = Vec::new();
    if args.represent {
        let opts = RepresentationOptions {
            tol: c.tol,
            seed: c.seed,
            ..RepresentationOptions::new(family.provenance.scales.clone(), family.clone())
        };
        // The requested lag, and the lag-free run the converse needs.
        let mut lags = vec![exps.gamma()];
        if exps.gamma() > 0.0 {
            lags.push(0.0);
        }
        for gamma in lags {
            let e = exps.with_gamma(gamma).map_err(usage)?;
            reps.push((gamma, supersolution_representation(&v, &e, &opts).map_err(numerical)?));
        }
        let entries = reps
            .iter()
            .map(|(gamma, rep)| {
                let mut r = to_value(rep);
                let obj = r.as_object_mut().unwrap();
                obj.insert("gamma".into(), json!(gamma));
                obj.insert("bRatio".into(), json!(rep.b_ratio()));
                r
            })
            .collect();
        report.insert("representations".into(), Value::Array(entries));
        grids.push(("b", &reps[0].1.b));
    }
    emit(c, report, &grids)
}

pub fn bmo(c: &Common, from_weight: bool, direction: DirectionArg) -> Outcome {
    let exps = validate(c)?;
    let u = if from_weight { weight_to_bmo(&load_weight(c)?, 1.0).map_err(numerical)? } else { load(c)? };
    let fams = families(c, u.spec(), exps.p())?;
    let dir: Direction = direction.into();
    let mut history = Vec::new();
    let mut last = None;
    for f in &fams {
        let r = pbmo_seminorm(&u, &exps, dir, f).map_err(numerical)?;
        history.push(r.seminorm);
        last = Some(r);
    }
    let r = last.unwrap();
    let offset = member_oscillation(&u, &exps, dir, &r.witness).map_err(numerical)?.map(|m| m.offset);
    let jn = match offset.map(|a| jn_decay_fit(&u, &exps, dir, &r.witness, a)) {
        Some(Ok(fit)) => json!({"fit": to_value(&fit.fit), "upper": to_value(&fit.upper), "lower": to_value(&fit.lower)}),
        Some(Err(e @ Error::FitRefused { .. })) => json!({"refused": e.to_string()}),
        Some(Err(e)) => return Err(numerical(e)),
        None => Value::Null,
    };
    let mut report = header("bmo", c, &exps);
    report.insert("grid".into(), grid_value(u.spec()));
    report.insert("fromWeight".into(), json!(from_weight));
    report.insert("report".into(), to_value(&r));
    report.insert("witnessOffset".into(), json!(offset));
    report.insert("history".into(), json!(history));
    report.insert("historyKind".into(), json!("scaleCount"));
    report.insert("verdict".into(), to_value(&history_verdict(&history)));
    report.insert("johnNirenberg".into(), jn);
    emit(c, report, &[])
}
