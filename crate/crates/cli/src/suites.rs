//! One function per subcommand. Each returns records and measurements in
//! generation order; the report sorts them.

use std::path::Path;
use std::str::FromStr;

use fgeom::cones::{mc_ratio, ConeSpec};
use fgeom::diffcore::{Polynomial, ScalarField, VectorField};
use fgeom::hessian_geometry::{ConnectionMode, HessianStructure};
use fgeom::paracomplex::{gauge_residual, ParaPotential};
use fgeom::saito::{export_frobenius_data, UnfoldingAn};
use fgeom::statman::{
    coarse_grain, markov_apply, markov_compose, simplex_geodesic, FiniteDistribution,
    MarkovKernel, PartitionSigmaAlgebra,
};
use fgeom::wdvv::FrobeniusPotentialData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ConfigError, PointSource};
use crate::input;
use crate::report::{write_atomic, Measurement, Record, Table};

#[derive(Debug, Default)]
pub struct SuiteOutput {
    pub records: Vec<Record>,
    pub measurements: Vec<Measurement>,
    pub table: Option<Table>,
}

impl SuiteOutput {
    fn measure(&mut self, name: &str, index: usize, value: Value) {
        self.measurements.push(Measurement {
            name: name.to_string(),
            index,
            value,
        });
    }
}

/// Independent generator for input index `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn parse_cone(s: &str) -> Result<ConeSpec, ConfigError> {
    ConeSpec::from_str(s).map_err(|e| ConfigError::Invalid(format!("--cone {s}: {e}")))
}

fn resolve_points(
    src: &PointSource,
    dim: usize,
    seed: u64,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
) -> Result<Vec<Vec<f64>>, ConfigError> {
    let pts = match src {
        PointSource::Inline(p) => p.clone(),
        PointSource::Csv(path) => input::read_points(path)?,
        PointSource::Random(k) => {
            return Ok((0..*k)
                .map(|i| sample(&mut stream_rng(seed, i as u64)))
                .collect())
        }
    };
    if let Some((i, p)) = pts.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return Err(ConfigError::Invalid(format!(
            "point {i} has {} coordinates, expected {dim}",
            p.len()
        )));
    }
    Ok(pts)
}

fn uniform_box(dim: usize, r: f64) -> impl FnMut(&mut ChaCha8Rng) -> Vec<f64> {
    move |rng| (0..dim).map(|_| rng.random_range(-r..r)).collect()
}

fn failed<E: std::fmt::Display>(name: &str, i: usize, loc: Value, tol: f64, code: &str, e: E) -> Record {
    Record::failure(name, i, loc, tol, code, e.to_string())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn cone_report(cone: &str, points: &PointSource, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let spec = parse_cone(cone)?;
    let h = HessianStructure::from_cone(&spec).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let pts = resolve_points(points, spec.ambient_dim(), seed, |r| spec.sample_interior(r))?;
    let mut out = SuiteOutput::default();
    out.measure(
        "cone",
        0,
        json!({
            "spec": spec.to_string(),
            "ambient_dim": spec.ambient_dim(),
            "homogeneity_degree": spec.homogeneity_degree(),
            "closed_form": spec.has_closed_form(),
        }),
    );
    for (i, x) in pts.iter().enumerate() {
        let loc = json!({ "point": x });
        match h.metric_at(x) {
            Ok(m) => {
                let n = m.g.nrows();
                let id = &m.g * &m.g_inv - nalgebra::DMatrix::<f64>::identity(n, n);
                out.records.push(Record::check("metric_inverse", i, loc.clone(), id.amax(), tol));
                let log_phi = spec.char_fn_closed(x).ok().map(|v| v.log_value);
                out.measure(
                    "point",
                    i,
                    json!({
                        "point": x,
                        "min_eigenvalue": m.min_eigenvalue,
                        "log_char_fn": log_phi,
                    }),
                );
            }
            Err(e) => out.records.push(failed("metric_inverse", i, loc, tol, e.code(), e)),
        }
    }
    Ok(out)
}

pub fn cone_mc_check(
    cone: &str,
    points: &PointSource,
    samples: usize,
    seed: u64,
    sigmas: f64,
) -> Result<SuiteOutput, ConfigError> {
    let spec = parse_cone(cone)?;
    if samples == 0 {
        return Err(ConfigError::Invalid("--samples must be positive".into()));
    }
    // points come from a generator distinct from the estimators' seeds
    let point_seed = seed ^ 0x9E37_79B9_7F4A_7C15;
    let pts = resolve_points(points, spec.ambient_dim(), point_seed, |r| spec.sample_interior(r))?;
    let reference = spec.unit_point();
    let mut out = SuiteOutput::default();
    let ref_mc = match spec.char_fn_mc(&reference, samples, seed) {
        Ok(m) => m,
        Err(e) => {
            out.records.push(failed("mc_ratio", 0, json!({ "point": reference }), sigmas, e.code(), e));
            return Ok(out);
        }
    };
    out.measure("reference", 0, json!({ "point": reference, "estimate": ref_mc }));
    for (i, x) in pts.iter().enumerate() {
        let loc = json!({ "point": x, "reference": reference });
        let est = match spec.char_fn_mc(x, samples, seed.wrapping_add(1 + i as u64)) {
            Ok(m) => m,
            Err(e) => {
                out.records.push(failed("mc_ratio", i, loc, sigmas, e.code(), e));
                continue;
            }
        };
        let (ratio, se) = mc_ratio(&est, &ref_mc);
        let closed = spec
            .char_fn_closed(x)
            .and_then(|a| spec.char_fn_closed(&reference).map(|b| (a.log_value - b.log_value).exp()));
        out.measure("estimate", i, json!({ "point": x, "estimate": est, "ratio": ratio, "ratio_se": se }));
        match closed {
            Ok(c) => {
                let z = (ratio - c).abs() / se;
                out.records.push(Record::check("mc_ratio", i, loc, z, sigmas));
            }
            Err(e) => out.records.push(failed("mc_ratio", i, loc, sigmas, e.code(), e)),
        }
    }
    Ok(out)
}

pub fn f_identity(cone: &str, trials: usize, degree: u32, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let spec = parse_cone(cone)?;
    let h = HessianStructure::from_cone(&spec).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let n = spec.ambient_dim();
    let per_trial: Vec<Vec<Record>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x = spec.sample_interior(&mut rng);
            let fields: Vec<VectorField> =
                (0..4).map(|_| Polynomial::random_field(n, degree, &mut rng)).collect();
            let vecs: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let loc = json!({ "point": x });
            let mut recs = Vec::new();
            match h.f_identity_residual(&fields[0], &fields[1], &fields[2], &fields[3], &x) {
                Ok(r) => recs.push(Record::check("f_identity", i, loc.clone(), r, tol)),
                Err(e) => {
                    recs.push(failed("f_identity", i, loc, tol, e.code(), e));
                    return recs;
                }
            }
            let ab = h.multiply_at(&x, &vecs[0], &vecs[1]);
            let ba = h.multiply_at(&x, &vecs[1], &vecs[0]);
            if let (Ok(ab), Ok(ba)) = (ab, ba) {
                recs.push(Record::check("commutativity", i, loc.clone(), max_abs_diff(&ab, &ba), tol));
            }
            match h.associator_residual(&x, &vecs[0], &vecs[1], &vecs[2]) {
                Ok(r) => recs.push(Record::check("associator", i, loc, r, tol)),
                Err(e) => recs.push(failed("associator", i, loc, tol, e.code(), e)),
            }
            recs
        })
        .collect();
    Ok(SuiteOutput {
        records: per_trial.into_iter().flatten().collect(),
        ..Default::default()
    })
}

fn load_potential(path: &Path) -> Result<FrobeniusPotentialData, ConfigError> {
    let text = input::read_text(path)?;
    FrobeniusPotentialData::from_json(&text).map_err(|e| ConfigError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn wdvv(potential: &Path, points: &PointSource, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let data = load_potential(potential)?;
    let pts = resolve_points(points, data.dim(), seed, uniform_box(data.dim(), 1.0))?;
    let mut out = SuiteOutput::default();
    out.measure("metric", 0, json!({ "condition_number": data.condition_number() }));
    wdvv_records(&data, &pts, tol, &mut out);
    Ok(out)
}

fn wdvv_records(data: &FrobeniusPotentialData, pts: &[Vec<f64>], tol: f64, out: &mut SuiteOutput) {
    for (i, x) in pts.iter().enumerate() {
        let loc = json!({ "point": x });
        match data.wdvv_residual(x) {
            Ok(r) => out.records.push(Record::check("wdvv", i, loc.clone(), r, tol)),
            Err(e) => out.records.push(failed("wdvv", i, loc.clone(), tol, e.code(), e)),
        }
        if data.identity().is_some() {
            match data.identity_check(x) {
                Ok(r) => out.records.push(Record::check("identity", i, loc, r, tol)),
                Err(e) => out.records.push(failed("identity", i, loc, tol, e.code(), e)),
            }
        }
    }
}

pub fn pencil(potential: &Path, points: &PointSource, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let data = load_potential(potential)?;
    let pts = resolve_points(points, data.dim(), seed, uniform_box(data.dim(), 1.0))?;
    let mut out = SuiteOutput::default();
    for (i, x) in pts.iter().enumerate() {
        let loc = json!({ "point": x });
        match data.pencil_curvature(x) {
            Ok(pc) => {
                out.records.push(Record::check("r1", i, loc.clone(), pc.r1_norm(), tol));
                out.records.push(Record::check("r2", i, loc, pc.r2_norm(), tol));
            }
            Err(e) => out.records.push(failed("pencil", i, loc, tol, e.code(), e)),
        }
    }
    Ok(out)
}

pub fn dual_flat(cone: &str, points: &PointSource, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let spec = parse_cone(cone)?;
    let h = HessianStructure::from_cone(&spec).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let pts = resolve_points(points, spec.ambient_dim(), seed, |r| spec.sample_interior(r))?;
    let per_point: Vec<SuiteOutput> = pts
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut out = SuiteOutput::default();
            let loc = json!({ "point": x });
            for (name, mode) in [
                ("curvature_zero_gamma", ConnectionMode::ZeroGamma),
                ("curvature_full_gamma", ConnectionMode::FullGamma),
            ] {
                match h.connection_curvature(x, mode) {
                    Ok(r) => out.records.push(Record::check(name, i, loc.clone(), r.max_abs(), tol)),
                    Err(e) => out.records.push(failed(name, i, loc.clone(), tol, e.code(), e)),
                }
            }
            if let Ok(r) = h.connection_curvature(x, ConnectionMode::LeviCivitaHalf) {
                out.measure("curvature_levi_civita_half", i, json!(r.max_abs()));
            }
            out
        })
        .collect();
    let mut out = SuiteOutput::default();
    for p in per_point {
        out.records.extend(p.records);
        out.measurements.extend(p.measurements);
    }
    Ok(out)
}

/// A polynomial in one block of the adapted coordinates, as a field on both.
fn block_field(poly: Polynomial, m: usize, offset: usize) -> ScalarField {
    ScalarField::new(2 * m, move |z| poly.eval_jet(&z[offset..offset + m]))
}

pub fn dolbeault(dim: usize, trials: usize, degree: u32, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    if dim == 0 {
        return Err(ConfigError::Invalid("--dim must be positive".into()));
    }
    let m = dim;
    let records = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let phi = ParaPotential::on_cube(m, Polynomial::random(2 * m, degree, &mut rng).to_field(), 1.0);
            let fp = block_field(Polynomial::random(m, degree + 1, &mut rng), m, 0);
            let fm = block_field(Polynomial::random(m, degree + 1, &mut rng), m, m);
            let pts: Vec<Vec<f64>> = (0..5).map(|_| phi.random_point(&mut rng)).collect();
            let loc = json!({ "trial": i, "points": pts });
            match gauge_residual(&phi, &fp, &fm, &pts) {
                Ok(r) => Record::check("gauge", i, loc, r, tol),
                Err(e) => failed("gauge", i, loc, tol, e.code(), e),
            }
        })
        .collect();
    Ok(SuiteOutput {
        records,
        ..Default::default()
    })
}

pub fn saito_table(n: usize, points: &PointSource, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    if n == 0 {
        return Err(ConfigError::Invalid("--n must be positive".into()));
    }
    let pts = resolve_points(points, n, seed, uniform_box(n, 2.0))?;
    let mut out = SuiteOutput::default();
    let mut columns: Vec<String> = (1..=n).map(|k| format!("t{k}")).collect();
    columns.extend(["i", "j", "g_res", "g_trace", "assoc_residual"].map(String::from));
    let mut rows = Vec::new();
    for (k, t) in pts.iter().enumerate() {
        let u = UnfoldingAn::new(n, t.clone()).expect("dimension checked");
        let assoc = u.associativity_residual();
        out.records.push(Record::check("associativity", k, json!({ "t": t }), assoc, tol));
        out.records.push(Record::check(
            "frobenius_symmetry",
            k,
            json!({ "t": t }),
            u.frobenius_symmetry_residual(),
            tol,
        ));
        for i in 0..n {
            for j in 0..n {
                let loc = json!({ "t": t, "i": i, "j": j });
                let g = u.residue_pairing(i, j).expect("index in range");
                let trace = u.trace_formula_pairing(i, j);
                let g_trace = match &trace {
                    Ok(tr) => {
                        out.records.push(Record::check("residue_vs_trace", k, loc, (g - tr.value).abs(), tol));
                        json!(tr.value)
                    }
                    Err(e) => {
                        out.records.push(failed("residue_vs_trace", k, loc, tol, e.code(), e));
                        Value::Null
                    }
                };
                let mut row: Vec<Value> = t.iter().map(|v| json!(v)).collect();
                row.extend([json!(i), json!(j), json!(g), g_trace, json!(assoc)]);
                rows.push(row);
            }
        }
    }
    out.table = Some(Table { columns, rows });
    Ok(out)
}

pub fn saito_export(
    n: usize,
    points: &PointSource,
    export: Option<&Path>,
    seed: u64,
    tol: f64,
) -> Result<SuiteOutput, ConfigError> {
    let pts = resolve_points(points, n, seed, uniform_box(n, 1.0))?;
    let mut out = SuiteOutput::default();
    let ex = match export_frobenius_data(n) {
        Ok(ex) => ex,
        Err(e) => {
            out.records.push(failed("export", 0, json!({ "n": n }), tol, e.code(), e));
            return Ok(out);
        }
    };
    let potential_json = ex.data.to_json().expect("exported potential is polynomial");
    if let Some(path) = export {
        write_atomic(path, &potential_json)?;
    }
    out.measure("fit_residual", 0, json!(ex.fit_residual));
    out.measure("flat_coordinates", 0, serde_json::to_value(&ex.flat).expect("serializable"));
    out.measure(
        "potential",
        0,
        serde_json::from_str(&potential_json).expect("round-trips"),
    );
    out.records.push(Record::check("flatness", 0, json!({ "n": n }), ex.flatness_residual, tol));
    let origin = UnfoldingAn::at_origin(n).residue_metric();
    out.records.push(Record::check(
        "metric_constant",
        0,
        json!({ "n": n }),
        (ex.data.metric() - origin).amax(),
        tol,
    ));
    wdvv_records(&ex.data, &pts, tol, &mut out);
    Ok(out)
}

fn random_distribution(n: usize, rng: &mut ChaCha8Rng) -> FiniteDistribution {
    FiniteDistribution::new(MarkovKernel::random(1, n, rng).rows().remove(0))
        .expect("normalized exponentials form a distribution")
}

fn parse_distribution(flag: &str, p: &[f64]) -> Result<FiniteDistribution, ConfigError> {
    FiniteDistribution::ingest(p.to_vec())
        .map(|d| d.value)
        .map_err(|e| ConfigError::Invalid(format!("{flag}: {e}")))
}

pub fn simplex_geodesic_suite(
    dim: usize,
    trials: usize,
    steps: usize,
    from: Option<&[f64]>,
    to: Option<&[f64]>,
    seed: u64,
    tol: f64,
) -> Result<SuiteOutput, ConfigError> {
    if steps == 0 {
        return Err(ConfigError::Invalid("--steps must be positive".into()));
    }
    let pairs: Vec<(FiniteDistribution, FiniteDistribution)> = match (from, to) {
        (Some(a), Some(b)) => vec![(parse_distribution("--from", a)?, parse_distribution("--to", b)?)],
        (None, None) => {
            if dim < 2 {
                return Err(ConfigError::Invalid("--dim must be at least 2".into()));
            }
            (0..trials)
                .map(|i| {
                    let mut rng = stream_rng(seed, i as u64);
                    (random_distribution(dim, &mut rng), random_distribution(dim, &mut rng))
                })
                .collect()
        }
        _ => return Err(ConfigError::Invalid("--from and --to go together".into())),
    };
    let mut out = SuiteOutput::default();
    for (i, (a, b)) in pairs.iter().enumerate() {
        let loc = json!({ "from": a, "to": b });
        match simplex_geodesic(a, b, steps) {
            Ok(r) => {
                out.records.push(Record::check("sum_preserved", i, loc.clone(), r.max_sum_error, tol));
                out.records.push(Record::check("positivity", i, loc.clone(), (-r.min_entry).max(0.0), tol));
                out.records.push(Record::check("straight_line", i, loc, r.max_line_deviation, tol));
            }
            Err(e) => out.records.push(failed("geodesic", i, loc, tol, e.code(), e)),
        }
    }
    Ok(out)
}

fn random_partition(n: usize, rng: &mut ChaCha8Rng) -> PartitionSigmaAlgebra {
    let k = n.div_ceil(2).max(1);
    let mut blocks = vec![Vec::new(); k];
    for x in 0..n {
        blocks[rng.random_range(0..k)].push(x);
    }
    blocks.retain(|b| !b.is_empty());
    PartitionSigmaAlgebra::new(n, blocks).expect("blocks cover the set")
}

pub fn markov_laws(dims: &[usize], trials: usize, seed: u64, tol: f64) -> Result<SuiteOutput, ConfigError> {
    let &[n1, n2, n3] = dims else {
        return Err(ConfigError::Invalid("--dims takes three sizes, e.g. 3,4,2".into()));
    };
    if dims.contains(&0) {
        return Err(ConfigError::Invalid("--dims must be positive".into()));
    }
    let mut out = SuiteOutput::default();
    for i in 0..trials {
        let mut rng = stream_rng(seed, i as u64);
        let k1 = MarkovKernel::random(n1, n2, &mut rng);
        let k2 = MarkovKernel::random(n2, n3, &mut rng);
        let k3 = MarkovKernel::random(n3, n1, &mut rng);
        let d = random_distribution(n1, &mut rng);
        let part = random_partition(n1, &mut rng);
        let loc = json!({ "trial": i });
        let compose = |a: &MarkovKernel, b: &MarkovKernel| markov_compose(a, b).expect("dims chain");
        let apply = |k: &MarkovKernel, d: &FiniteDistribution| markov_apply(k, d).expect("dims chain");
        let left = compose(&MarkovKernel::identity(n1), &k1).max_abs_diff(&k1);
        let right = compose(&k1, &MarkovKernel::identity(n2)).max_abs_diff(&k1);
        let assoc = compose(&compose(&k1, &k2), &k3).max_abs_diff(&compose(&k1, &compose(&k2, &k3)));
        let functor = apply(&compose(&k1, &k2), &d).max_abs_diff(&apply(&k2, &apply(&k1, &d)));
        let q = apply(&k1, &d);
        let preservation = q
            .probabilities()
            .iter()
            .fold(q.sum_error(), |m, &v| m.max((-v).max(0.0)));
        let cg = coarse_grain(&d, &part)
            .expect("partition over the ground set")
            .max_abs_diff(&apply(&part.indicator_kernel(), &d));
        for (name, r) in [
            ("left_identity", left),
            ("right_identity", right),
            ("associativity", assoc),
            ("functoriality", functor),
            ("simplex_preservation", preservation),
            ("coarse_grain", cg),
        ] {
            out.records.push(Record::check(name, i, loc.clone(), r, tol));
        }
    }
    Ok(out)
}
