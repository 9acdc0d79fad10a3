use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular metric: |det g| = {det:e} at {at:?}")]
    SingularMetric { det: f64, at: Vec<f64> },
    #[error("metric is not Lorentzian: {negative} negative eigenvalues at {at:?}")]
    SignatureError { negative: usize, at: Vec<f64> },
    #[error("finite-difference stencil leaves the domain at {at:?}")]
    StencilOutOfDomain { at: Vec<f64> },
    #[error("direction is not a unit vector: |k| = {norm}")]
    NotUnit { norm: f64 },
    #[error("deformed level sets are not timelike: measured lower bound {bound:e}")]
    DeformationNotTimelike { bound: f64 },
    #[error("section is not spacelike at launch point {index}")]
    SectionNotSpacelike { index: usize },
    #[error("geodesic {index} blew up at parameter {param} (step {step:e})")]
    GeodesicBlowup { index: usize, param: f64, step: f64 },
    #[error("band {n} is outside the domain: sigma_hi = {sigma_hi} > sigma0 = {sigma0}")]
    BandOutsideDomain { n: u32, sigma_hi: f64, sigma0: f64 },
    #[error("ODE tolerance failure in band {n}, order {order}: estimate {estimate:e}")]
    OdeToleranceFailure { n: u32, order: usize, estimate: f64 },
    #[error("envelope vanishes (|env| = {value:e}) at sigma = {sigma}")]
    EnvelopeZero { value: f64, sigma: f64 },
    #[error("interference root for band {n} leaves the plateau overlap ({lo}, {hi})")]
    RootOutsideOverlap { n: u32, lo: f64, hi: f64 },
    #[error("probed coefficient a^eta,eta = {probed:e} disagrees with metric contraction {direct:e}")]
    ProbeInconsistent { probed: f64, direct: f64 },
    #[error("g(d eta, d eta) = {value:e} is below the floor {floor:e} in band {n}")]
    CoefficientFloorViolated { n: u32, value: f64, floor: f64 },
    #[error("cutoff lobes overlap: epsilon = {epsilon} must be < 1/2")]
    LobeOverlap { epsilon: f64 },
    #[error("point sigma = {sigma} lies outside every band")]
    OutsideBands { sigma: f64 },
    #[error("potential quotient is ill-conditioned near the surface: {condition:e}")]
    NearSurfaceIllConditioned { condition: f64 },
    #[error("V extraction disagrees across test functions by {spread:e}")]
    VExtractionInconsistent { spread: f64 },
    #[error("point is outside the region |tau| <= pi/2 - eps, omega^d < 0")]
    OutsideRegion,
    #[error("boundary metric is not Lorentzian at grid point {index}")]
    NotLorentzian { index: usize },
    #[error("I/O failure: {0}")]
    IoFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("band {n}, stage {stage}: {source}")]
    Context {
        n: u32,
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap with band/stage context.
    pub fn in_band(self, n: u32, stage: &str) -> Error {
        Error::Context { n, stage: stage.to_string(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.root() {
            Error::SingularMetric { .. } => "SingularMetric",
            Error::SignatureError { .. } => "SignatureError",
            Error::StencilOutOfDomain { .. } => "StencilOutOfDomain",
            Error::NotUnit { .. } => "NotUnit",
            Error::DeformationNotTimelike { .. } => "DeformationNotTimelike",
            Error::SectionNotSpacelike { .. } => "SectionNotSpacelike",
            Error::GeodesicBlowup { .. } => "GeodesicBlowup",
            Error::BandOutsideDomain { .. } => "BandOutsideDomain",
            Error::OdeToleranceFailure { .. } => "OdeToleranceFailure",
            Error::EnvelopeZero { .. } => "EnvelopeZero",
            Error::RootOutsideOverlap { .. } => "RootOutsideOverlap",
            Error::ProbeInconsistent { .. } => "ProbeInconsistent",
            Error::CoefficientFloorViolated { .. } => "CoefficientFloorViolated",
            Error::LobeOverlap { .. } => "LobeOverlap",
            Error::OutsideBands { .. } => "OutsideBands",
            Error::NearSurfaceIllConditioned { .. } => "NearSurfaceIllConditioned",
            Error::VExtractionInconsistent { .. } => "VExtractionInconsistent",
            Error::OutsideRegion => "OutsideRegion",
            Error::NotLorentzian { .. } => "NotLorentzian",
            Error::IoFailure(_) => "IoFailure",
            Error::Config(_) => "Config",
            Error::Context { .. } => unreachable!(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
