use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("{what} must be nonnegative, got {value}")]
    NegativeInput { what: &'static str, value: f64 },

    #[error("price {price} outside [0, {cap}]")]
    PriceOutOfRange { price: f64, cap: f64 },

    #[error("request of {energy} kWh over {stages} stages cannot be met (at most {max} kWh)")]
    InfeasibleRequest { energy: f64, stages: u32, max: f64 },

    #[error("{occupied} occupied piles exceed capacity {capacity}")]
    OverCapacity { occupied: usize, capacity: usize },

    #[error("storage power {power} kW outside [{min}, {max}] at SOC {soc}")]
    StoragePower { power: f64, min: f64, max: f64, soc: f64 },

    #[error("{source_name} utilisation {used} kW exceeds availability {available} kW")]
    RenewableOveruse { source_name: &'static str, used: f64, available: f64 },

    #[error("pile {pile}: {reason}")]
    InfeasibleCharge { pile: usize, reason: String },

    #[error("charge vector has {got} entries for {expected} piles")]
    ChargeLength { got: usize, expected: usize },

    #[error("no sample path shows the observed event")]
    NoMatchingPath,

    #[error("per-path rewards missing: expected {expected}, got {got}")]
    MissingRewards { expected: usize, got: usize },

    #[error("toy model too large: {0}")]
    ToyTooLarge(String),

    #[error("MILP solve ended with status {status}")]
    Solver { status: String },

    #[error(transparent)]
    Milp(#[from] evcs_milp::MilpError),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
