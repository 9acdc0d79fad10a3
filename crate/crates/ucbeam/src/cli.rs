//! Run configuration, the staged pipeline and report emission.

use crate::aads::{
    conjugate_operator, embedding_samples, flat_boundary, gncc_check, omega_d_from_planar, pure_to_planar,
    support_in_half_space, v_sup_by_floor, verify_embedding, verify_map, ConformalOperator, GnccReport, SupportVerdict,
};
use crate::assembly::{certify_equation, decay_report, glue, probe_set, CertificationSummary, DecayReport, GlueReport, GluedCounterexample};
use crate::bands::{band_domain, Resolution};
use crate::eikonal::{
    deform_sigma, planar_eikonal, pure_ads_eikonal, tensor_points, verify_eikonal, AdaptedChart, BumpProfile,
    CertificationReport,
};
use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, FgGeneric, GridMetric, Metric, PlanarAmbient, PureAdsConformal, Stencil};
use crate::interference::{closed_form_root, locate_surface, CorrectionConfig, InterferenceSurface};
use crate::transport::{
    assemble_band, conjugation_residual, interior_nodes, ladder_report, solve_hierarchy, BandOperator, Beam,
    EnvelopeField, HierarchyConfig, LadderReport, TransportReport,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Planar,
    PlanarLocalized,
    PureAds,
    FgGeneric,
    CustomMetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    VerifyEikonal,
    BuildBands,
    FindSurfaces,
    Assemble,
    Certify,
    AadsPure,
    AadsGncc,
    Full,
}

impl Stage {
    fn bands(self) -> bool {
        matches!(self, Stage::BuildBands | Stage::FindSurfaces | Stage::Assemble | Stage::Certify | Stage::Full)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eikonal_planar: f64,
    pub eikonal_pure: f64,
    pub conjugation: f64,
    pub telescoping: f64,
    pub surface_abs: f64,
    pub surface_c1: f64,
    pub vanishing_slope: f64,
    pub amplitude_band: (f64, f64),
    pub decay_step: f64,
    pub decay_q: (f64, f64),
    pub certify_interior: f64,
    pub certify_near: f64,
    pub embedding: f64,
    pub round_trip: f64,
    pub gncc_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eikonal_planar: 1e-10,
            eikonal_pure: 1e-7,
            conjugation: 1e-5,
            telescoping: 0.01,
            surface_abs: 1e-9,
            surface_c1: 2.0,
            vanishing_slope: 2.7,
            amplitude_band: (-9.0 / 8.0 - 0.05, -7.0 / 8.0 + 0.05),
            decay_step: 10.0,
            decay_q: (7.0 / 8.0, 9.0 / 8.0),
            certify_interior: 1e-5,
            certify_near: 1e-4,
            embedding: 1e-6,
            round_trip: 1e-9,
            gncc_zero: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub q_stride: usize,
    pub sigma_stride: usize,
    pub margin: usize,
    pub near: usize,
    pub min_interior: usize,
    pub min_near: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { q_stride: 16, sigma_stride: 6, margin: 5, near: 4, min_interior: 500, min_near: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub mu_max: u32,
    pub derivatives: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { mu_max: 12, derivatives: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AadsConfig {
    pub embedding_samples: usize,
    pub eps: f64,
    pub delta: f64,
    pub rho0: f64,
    pub delta_fail: f64,
    pub mu: f64,
    pub gncc_points: usize,
    pub gncc_fan: usize,
    /// FG coefficient tables `g(rho) = sum rho^k T_k`, boundary dimension d
    pub fg_tables: Vec<Vec<Vec<f64>>>,
    /// sampled metric for `custom-metric`, read as an FG bulk
    pub metric_file: Option<PathBuf>,
}

impl Default for AadsConfig {
    fn default() -> Self {
        let mink = vec![vec![-1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let g2 = vec![vec![0.3, 0.0, 0.0], vec![0.0, 0.2, 0.1], vec![0.0, 0.1, -0.1]];
        AadsConfig {
            embedding_samples: 200,
            eps: 0.3,
            delta: 0.01,
            rho0: 0.01,
            delta_fail: 10.0,
            mu: 0.5,
            gncc_points: 64,
            gncc_fan: 64,
            fg_tables: vec![mink, vec![vec![0.0; 3]; 3], g2],
            metric_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub stage: Stage,
    pub domain: DomainSpec,
    pub exponents: HierarchyConfig,
    pub n0: u32,
    pub nmax: u32,
    pub resolution: Resolution,
    pub tolerances: Tolerances,
    pub correction: CorrectionConfig,
    pub bump: Option<BumpProfile>,
    pub probes: ProbeConfig,
    pub decay: DecayConfig,
    pub aads: AadsConfig,
    pub strict_alpha: bool,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Planar,
            stage: Stage::Full,
            domain: DomainSpec::default(),
            exponents: HierarchyConfig::default(),
            n0: 12,
            nmax: 20,
            resolution: Resolution::default(),
            tolerances: Tolerances::default(),
            correction: CorrectionConfig::default(),
            bump: None,
            probes: ProbeConfig::default(),
            decay: DecayConfig::default(),
            aads: AadsConfig::default(),
            strict_alpha: false,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.exponents.validate(self.strict_alpha)?;
        self.correction.validate()?;
        if self.n0 < 2 || self.nmax < self.n0 + 1 {
            return Err(Error::Config(format!("band range [{}, {}] needs n0 >= 2 and nmax > n0", self.n0, self.nmax)));
        }
        let t = &self.tolerances;
        let all = [
            t.eikonal_planar, t.eikonal_pure, t.conjugation, t.telescoping, t.surface_abs, t.surface_c1,
            t.vanishing_slope, t.decay_step, t.certify_interior, t.certify_near, t.embedding, t.round_trip, t.gncc_zero,
        ];
        if all.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let Some(b) = &self.bump {
            b.validate()?;
        }
        if self.scenario == Scenario::PlanarLocalized && self.bump.is_none() {
            return Err(Error::Config("planar-localized needs a bump profile".into()));
        }
        if self.scenario == Scenario::CustomMetric && self.aads.metric_file.is_none() {
            return Err(Error::Config("custom-metric needs aads.metric_file".into()));
        }
        Ok(())
    }

    /// `--strict-alpha`: alpha = 10 and the strict exponent check.
    pub fn set_strict_alpha(&mut self) {
        self.strict_alpha = true;
        self.exponents.alpha = 10.0;
    }

    fn chart(&self) -> AdaptedChart {
        let xi = Complex64::new(-1.0, 0.0);
        let mut kbar = vec![0.0; self.domain.ybar_box.len()];
        kbar[0] = 1.0;
        match (&self.scenario, &self.bump) {
            (Scenario::PlanarLocalized, Some(b)) => AdaptedChart::deformed(kbar, b.clone(), xi),
            _ => AdaptedChart::planar(kbar, xi),
        }
    }
}

/// One asserted invariant with its measured number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub criterion: u8,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check(name: &str, criterion: u8, measured: f64, threshold: f64, pass: bool) -> Check {
    Check { name: name.into(), criterion, measured, threshold, pass }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BandRecord {
    pub n: u32,
    pub transport: TransportReport,
    pub ladder: LadderReport,
    /// worst over the three test envelopes
    pub conjugation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub n: u32,
    pub closed_form: f64,
    pub max_deviation: f64,
    pub c1: f64,
    pub min_slope: f64,
    pub max_abs_phi: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AadsRecord {
    pub embedding_deviation: Option<f64>,
    pub mutated_deviation: Option<f64>,
    pub round_trip: Option<f64>,
    pub support: Option<SupportVerdict>,
    pub support_fail: Option<SupportVerdict>,
    pub conformal: Option<ConformalOperator>,
    pub v_by_floor: Vec<(f64, f64)>,
    pub gncc_linear: Option<GnccReport>,
    pub gncc_convex: Option<GnccReport>,
    pub gncc_seconds: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub eikonal: Vec<CertificationReport>,
    pub bands: Vec<BandRecord>,
    pub surfaces: Vec<SurfaceRecord>,
    pub glue: Option<GlueReport>,
    pub decay: Option<DecayReport>,
    pub certification: Option<CertificationSummary>,
    pub aads: AadsRecord,
    pub checks: Vec<Check>,
    /// wall-clock seconds per stage; the only non-deterministic field
    pub timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub artifacts: Option<Artifacts>,
}

impl RunResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Checks grouped by criterion: `(criterion, all pass)`.
    pub fn by_criterion(&self) -> Vec<(u8, bool)> {
        let mut ids: Vec<u8> = self.checks.iter().map(|c| c.criterion).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().map(|i| (i, self.checks.iter().filter(|c| c.criterion == i).all(|c| c.pass))).collect()
    }
}

/// In-memory fields kept for CSV and binary dumps.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub beams: Vec<Beam>,
    pub surfaces: Vec<InterferenceSurface>,
}

fn timed<T>(timings: &mut Vec<(String, f64)>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    timings.push((name.to_string(), t.elapsed().as_secs_f64()));
    Ok(out)
}

fn eikonal_stage(cfg: &RunConfig, checks: &mut Vec<Check>) -> Result<Vec<CertificationReport>> {
    let tol = &cfg.tolerances;
    let mut out = Vec::new();
    if matches!(cfg.scenario, Scenario::Planar | Scenario::PlanarLocalized) {
        let d = cfg.domain.d;
        let mut kbar = vec![0.0; d - 1];
        kbar[0] = 1.0;
        let data = planar_eikonal(&kbar)?;
        let mut bx = vec![(0.05, cfg.domain.sigma0)];
        bx.extend(cfg.domain.ybar_box.iter().copied());
        bx.push((cfg.domain.s_minus, cfg.domain.s_plus));
        let pts = tensor_points(&bx, 33);
        let metric = PlanarAmbient { d };
        let st = Stencil::uniform(d + 1, 1e-3);
        let rep = verify_eikonal(&data, &metric, &pts, &st, 0.0, tol.eikonal_planar)?;
        checks.push(check("eikonal-planar", 1, rep.null_residual.max(rep.gauge_residual.unwrap_or(0.0)), tol.eikonal_planar, rep.pass));
        out.push(rep);
        if let (Scenario::PlanarLocalized, Some(b)) = (cfg.scenario, &cfg.bump) {
            let (_, lower) = deform_sigma(&data, b, &metric, &pts, &st)?;
            checks.push(check("eikonal-deformed-timelike", 1, lower, 0.0, lower > 0.0));
        }
    }
    // pure AdS in (tau, chi, theta_1, theta_2), omega^d < 0
    let data = pure_ads_eikonal(&[1.0, 0.0])?;
    let pts = tensor_points(&[(-1.0, 1.0), (0.3, 1.2), (1.8, 2.9), (0.3, 2.8)], 9);
    let rep = verify_eikonal(&data, &PureAdsConformal { d: 3 }, &pts, &Stencil::uniform(4, 1e-3), 0.0, tol.eikonal_pure)?;
    checks.push(check("eikonal-pure-ads", 1, rep.null_residual, tol.eikonal_pure, rep.pass));
    out.push(rep);
    Ok(out)
}

/// Operators, hierarchies and beams for bands `n0..=nmax+1`.
pub fn build_bands(cfg: &RunConfig) -> Result<(Vec<(BandOperator, Beam)>, Vec<BandRecord>)> {
    let chart = cfg.chart();
    let invariant = cfg.bump.is_none() || cfg.scenario != Scenario::PlanarLocalized;
    let mut bands = Vec::new();
    let mut records = Vec::new();
    for n in cfg.n0..=cfg.nmax + 1 {
        let ctx = |e: Error| e.in_band(n, "transport");
        let band = band_domain(n, &cfg.domain, &cfg.resolution, invariant).map_err(ctx)?;
        let op = BandOperator::new(&band, &chart, &cfg.exponents).map_err(ctx)?;
        let (fields, transport) = solve_hierarchy(&op, &cfg.exponents).map_err(ctx)?;
        let ladder = ladder_report(&op, &fields);
        let nodes = interior_nodes(&op.grid, 4);
        let (zlo, zhi) = (op.grid.z.lo, op.grid.z.hi());
        let width = zhi - zlo;
        let tests = [
            fields[0].clone(),
            EnvelopeField::from_fn(&op.grid, "wave", |x| {
                let z = (crate::bands::rescaled(n, x[0]) - zlo) / width;
                Complex64::new((3.0 * z).cos(), (2.0 * x[x.len() - 1]).sin())
            }),
            EnvelopeField::from_fn(&op.grid, "poly", |x| {
                let z = (crate::bands::rescaled(n, x[0]) - zlo) / width;
                let s = x[x.len() - 1];
                Complex64::new(1.0 + z * z - 0.5 * s, z * s)
            }),
        ];
        let conjugation = tests.iter().map(|w| conjugation_residual(&op, w, &nodes)).fold(0.0, f64::max);
        let beam = assemble_band(&op, fields);
        records.push(BandRecord { n, transport, ladder, conjugation });
        bands.push((op, beam));
    }
    Ok((bands, records))
}

fn band_checks(cfg: &RunConfig, records: &[BandRecord], checks: &mut Vec<Check>) {
    let tol = &cfg.tolerances;
    for r in records.iter().filter(|r| r.n <= cfg.nmax) {
        checks.push(check(&format!("conjugation-n{}", r.n), 2, r.conjugation, tol.conjugation, r.conjugation <= tol.conjugation));
        let dev = r.ladder.rows.iter().map(|x| x.rel_dev).fold(0.0, f64::max);
        checks.push(check(&format!("telescoping-n{}", r.n), 3, dev, tol.telescoping, dev <= tol.telescoping));
        let f = r.ladder.rows.iter().filter_map(|x| x.factor).fold(0.0, f64::max);
        checks.push(check(&format!("ladder-shrinks-n{}", r.n), 3, f, 1.0, r.ladder.decreasing));
    }
}

fn surface_records(cfg: &RunConfig, bands: &[(BandOperator, Beam)], checks: &mut Vec<Check>) -> Result<(Vec<InterferenceSurface>, Vec<SurfaceRecord>)> {
    let tol = &cfg.tolerances;
    let flat = cfg.scenario == Scenario::Planar;
    let mut surfaces = Vec::new();
    let mut records = Vec::new();
    for i in 0..bands.len() - 1 {
        let n = cfg.n0 + i as u32;
        let s = locate_surface(n, &bands[i].1, &bands[i + 1].1).map_err(|e| e.in_band(n, "interference"))?;
        let closed = closed_form_root(n);
        let dev = s.sigma.iter().map(|v| (v - closed).abs()).fold(0.0, f64::max);
        if flat {
            checks.push(check(&format!("surface-closed-form-n{n}"), 4, dev, tol.surface_abs, dev <= tol.surface_abs));
        }
        checks.push(check(&format!("surface-c1-n{n}"), 4, s.c1, tol.surface_c1, s.c1 <= tol.surface_c1));
        records.push(SurfaceRecord { n, closed_form: closed, max_deviation: dev, c1: s.c1, min_slope: s.min_slope, max_abs_phi: s.max_abs_phi });
        surfaces.push(s);
    }
    Ok((surfaces, records))
}

fn glue_checks(cfg: &RunConfig, rep: &GlueReport, checks: &mut Vec<Check>) {
    let tol = &cfg.tolerances;
    for c in &rep.corrections {
        checks.push(check(&format!("vanishing-order-n{}", c.n), 5, c.min_slope, tol.vanishing_slope, c.min_slope >= tol.vanishing_slope));
        if cfg.scenario == Scenario::Planar {
            let (lo, hi) = tol.amplitude_band;
            let v = c.log_sup_over_n2;
            checks.push(check(&format!("amplitude-n{}", c.n), 6, v, lo, v >= lo && v <= hi));
        }
    }
}

fn decay_stage(cfg: &RunConfig, glued: &GluedCounterexample, checks: &mut Vec<Check>) -> Result<DecayReport> {
    let samples: Vec<f64> = (cfg.n0 + 1..cfg.nmax).map(|n| 1.0 / n as f64).collect();
    let mus: Vec<u32> = (0..=cfg.decay.mu_max).collect();
    let d = decay_report(glued, &samples, &mus, cfg.decay.derivatives)?;
    let tol = &cfg.tolerances;
    checks.push(check("decay-u-step", 7, d.u_min_step, tol.decay_step, d.u_min_step >= tol.decay_step));
    checks.push(check("decay-a-step", 7, d.a_min_step, tol.decay_step, d.a_min_step >= tol.decay_step));
    let (lo, hi) = tol.decay_q;
    checks.push(check("decay-q", 7, d.q_fit, lo, d.q_fit >= lo && d.q_fit <= hi));
    Ok(d)
}

fn certify_stage(cfg: &RunConfig, glued: &GluedCounterexample, checks: &mut Vec<Check>) -> Result<CertificationSummary> {
    let p = &cfg.probes;
    let probes = probe_set(glued, p.q_stride, p.sigma_stride, p.margin, p.near);
    let tol = &cfg.tolerances;
    let c = certify_equation(glued, &probes, tol.certify_interior, tol.certify_near)?;
    checks.push(check("certify-interior", 8, c.max_interior, tol.certify_interior, c.max_interior <= tol.certify_interior));
    checks.push(check("certify-near-surface", 8, c.max_near_surface, tol.certify_near, c.max_near_surface <= tol.certify_near));
    checks.push(check("certify-interior-count", 8, c.interior as f64, p.min_interior as f64, c.interior >= p.min_interior));
    checks.push(check("certify-near-count", 8, c.near_surface as f64, p.min_near as f64, c.near_surface >= p.min_near));
    Ok(c)
}

fn aads_pure_stage(cfg: &RunConfig, rec: &mut AadsRecord, checks: &mut Vec<Check>) -> Result<()> {
    let a = &cfg.aads;
    let tol = &cfg.tolerances;
    let samples = embedding_samples(a.embedding_samples, (cfg.seed % 100_000) as usize);
    let dev = verify_embedding(&samples, 0.1, 1e-6)?;
    let mutated = verify_map(&samples, 1e-6, |p| {
        let mut x = pure_to_planar(p, 0.1)?;
        x[0] = -x[0] + 0.1 * x[1];
        Ok(x)
    })?;
    let mut trip = 0.0f64;
    for p in &samples {
        trip = trip.max((omega_d_from_planar(&pure_to_planar(p, 0.1)?) - p[2].cos()).abs());
    }
    checks.push(check("embedding", 9, dev, tol.embedding, dev <= tol.embedding));
    checks.push(check("embedding-mutation-detected", 9, mutated, tol.embedding, mutated > tol.embedding));
    checks.push(check("round-trip", 9, trip, tol.round_trip, trip <= tol.round_trip));
    let good = support_in_half_space(a.eps, a.delta, a.rho0, [1.0, 0.0]);
    let bad = support_in_half_space(a.eps, a.delta_fail, a.rho0, [1.0, 0.0]);
    checks.push(check("support-margin", 10, good.max_omega_d, 0.0, good.pass));
    checks.push(check("support-large-delta-fails", 10, bad.max_omega_d, 0.0, !bad.pass));
    rec.embedding_deviation = Some(dev);
    rec.mutated_deviation = Some(mutated);
    rec.round_trip = Some(trip);
    rec.support = Some(good);
    rec.support_fail = Some(bad);
    Ok(())
}

fn aads_gncc_stage(cfg: &RunConfig, rec: &mut AadsRecord, checks: &mut Vec<Check>) -> Result<()> {
    let a = &cfg.aads;
    let metric: Arc<dyn Metric> = match (&cfg.scenario, &a.metric_file) {
        (Scenario::CustomMetric, Some(p)) => Arc::new(GridMetric::load(p)?),
        _ => Arc::new(FgGeneric { tables: a.fg_tables.clone() }),
    };
    let dim = metric.dim();
    let pts: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let mut x = vec![0.1; dim];
            x[0] = 0.2 + 0.02 * i as f64;
            x
        })
        .collect();
    let conf = conjugate_operator(a.mu, metric, &pts)?;
    rec.v_by_floor = v_sup_by_floor(&conf, &[0.2, 0.4, 0.6, 0.8]);
    rec.conformal = Some(conf);
    let t = Instant::now();
    let lin = gncc_check(&flat_boundary(a.gncc_points, |x| 1.0 + 0.3 * x[0] - 0.2 * x[1]), a.gncc_fan)?;
    let convex = gncc_check(&flat_boundary(a.gncc_points, |x| 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1])), a.gncc_fan)?;
    let secs = t.elapsed().as_secs_f64() / 2.0;
    let tol = &cfg.tolerances;
    checks.push(check("gncc-linear-zero", 11, lin.margin.abs(), tol.gncc_zero, lin.margin.abs() <= tol.gncc_zero));
    checks.push(check("gncc-convex-positive", 11, convex.margin, 0.0, convex.margin > 0.0));
    checks.push(check("gncc-runtime", 11, secs, 10.0, secs < 10.0));
    rec.gncc_linear = Some(lin);
    rec.gncc_convex = Some(convex);
    rec.gncc_seconds = Some(secs);
    Ok(())
}

/// Runs the stages selected by `config.stage` for `config.scenario`.
pub fn run_pipeline(config: RunConfig) -> Result<RunResult> {
    config.validate()?;
    let cfg = &config;
    let stage = cfg.stage;
    let mut checks = Vec::new();
    let mut timings = Vec::new();
    let mut res = RunResult {
        config: config.clone(),
        eikonal: Vec::new(),
        bands: Vec::new(),
        surfaces: Vec::new(),
        glue: None,
        decay: None,
        certification: None,
        aads: AadsRecord::default(),
        checks: Vec::new(),
        timings: Vec::new(),
        artifacts: None,
    };
    let planar = matches!(cfg.scenario, Scenario::Planar | Scenario::PlanarLocalized);
    if matches!(stage, Stage::VerifyEikonal | Stage::Full) {
        res.eikonal = timed(&mut timings, "eikonal", || eikonal_stage(cfg, &mut checks))?;
    }
    if planar && stage.bands() {
        let (bands, records) = timed(&mut timings, "bands", || build_bands(cfg))?;
        band_checks(cfg, &records, &mut checks);
        res.bands = records;
        let beams: Vec<Beam> = bands.iter().map(|b| b.1.clone()).collect();
        if stage != Stage::BuildBands {
            let (surfaces, recs) = timed(&mut timings, "surfaces", || surface_records(cfg, &bands, &mut checks))?;
            res.surfaces = recs;
            res.artifacts = Some(Artifacts { beams, surfaces });
        } else {
            res.artifacts = Some(Artifacts { beams, surfaces: Vec::new() });
        }
        if matches!(stage, Stage::Assemble | Stage::Certify | Stage::Full) {
            let sz = bands[0].0.grid.s_zero();
            let nodes = vec![sz, sz / 2, (3 * sz) / 2];
            let (glued, rep) = timed(&mut timings, "glue", || glue(bands, &cfg.correction, &nodes))?;
            glue_checks(cfg, &rep, &mut checks);
            res.glue = Some(rep);
            if matches!(stage, Stage::Assemble | Stage::Full) {
                res.decay = Some(timed(&mut timings, "decay", || decay_stage(cfg, &glued, &mut checks))?);
            }
            if matches!(stage, Stage::Certify | Stage::Full) {
                res.certification = Some(timed(&mut timings, "certify", || certify_stage(cfg, &glued, &mut checks))?);
            }
        }
    }
    if matches!(stage, Stage::AadsPure | Stage::Full) && matches!(cfg.scenario, Scenario::Planar | Scenario::PureAds) {
        timed(&mut timings, "aads-pure", || aads_pure_stage(cfg, &mut res.aads, &mut checks))?;
    }
    if matches!(stage, Stage::AadsGncc | Stage::Full) && cfg.scenario != Scenario::PlanarLocalized {
        timed(&mut timings, "aads-gncc", || aads_gncc_stage(cfg, &mut res.aads, &mut checks))?;
    }
    res.checks = checks;
    res.timings = timings;
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Fields,
}

pub const DECAY_HEADER: &str = "sigma0,N,mu,sup_value";

/// Writes `result.json`, and on request the CSV tables and binary envelope dumps, into `dir`.
pub fn emit_reports(result: &RunResult, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        let p = dir.join("result.json");
        let text = serde_json::to_string_pretty(result).map_err(|e| Error::IoFailure(e.to_string()))?;
        std::fs::write(&p, text)?;
        written.push(p);
    }
    if formats.contains(&Format::Csv) {
        if let Some(d) = &result.decay {
            for (tag, rows) in [("u", &d.u_rows), ("a", &d.a_rows)] {
                let p = dir.join(format!("decay_{tag}.csv"));
                let mut f = std::fs::File::create(&p)?;
                writeln!(f, "{DECAY_HEADER}")?;
                for r in rows.iter() {
                    writeln!(f, "{},{},{},{:.6e}", r.sigma0, r.n_deriv, r.mu, r.sup_value)?;
                }
                written.push(p);
            }
        }
        if !result.bands.is_empty() {
            let p = dir.join("ladder.csv");
            let mut f = std::fs::File::create(&p)?;
            writeln!(f, "n,J,measured,predicted,rel_dev")?;
            for b in &result.bands {
                for r in &b.ladder.rows {
                    writeln!(f, "{},{},{:.6e},{:.6e},{:.3e}", b.n, r.j, r.measured, r.predicted, r.rel_dev)?;
                }
            }
            written.push(p);
        }
        if let Some(a) = &result.artifacts {
            for (s, beam) in a.surfaces.iter().zip(&a.beams) {
                let p = dir.join(format!("surface_n{}.csv", s.n));
                s.write_csv(&beam.envelope.grid, &p)?;
                written.push(p);
            }
        }
    }
    if formats.contains(&Format::Fields) {
        if let Some(a) = &result.artifacts {
            for b in &a.beams {
                let p = dir.join(format!("envelope_n{}.bin", b.envelope.grid.n));
                b.envelope.write_binary(&p)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}
