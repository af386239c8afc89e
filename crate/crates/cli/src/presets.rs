//! Named experiment configurations.

use serde_json::{json, Value};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub config: fn() -> Value,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "toy-uniform",
        description: "uniform toy, K = 2, y = (-1, 1), permABC at 0.1 eps*",
        config: || {
            json!({
                "model": { "name": "uniform-toy" },
                "sampler": "permabc",
                "data": { "source": "inline", "compartments": [[-1.0], [1.0]] },
                "N": 10000,
                "epsilon": 0.1 * std::f64::consts::SQRT_2,
            })
        },
    },
    Preset {
        name: "gaussian-benchmark",
        description: "Gaussian hierarchy, K = 10, n = 10, permABC-SMC under a 1e6 call budget",
        config: || {
            json!({
                "model": { "name": "gaussian-hierarchy", "n": 10 },
                "sampler": "smc",
                "data": { "source": "synthetic", "K": 10 },
                "N": 1000,
                "budget": 1_000_000,
            })
        },
    },
    Preset {
        name: "gaussian-os",
        description: "Gaussian hierarchy, K = 10, over-sampling from M0 = 150 with snapshots",
        config: || {
            json!({
                "model": { "name": "gaussian-hierarchy", "n": 10 },
                "sampler": "smc-os",
                "data": { "source": "synthetic", "K": 10 },
                "N": 1000,
                "M0": 150,
                "snapshots": true,
            })
        },
    },
    Preset {
        name: "ridge",
        description: "over-parameterised Gaussian model with a global/local ridge, K = 5",
        config: || {
            json!({
                "model": { "name": "over-parameterized" },
                "sampler": "smc",
                "data": { "source": "synthetic", "K": 5 },
                "N": 1000,
                "budget": 1_000_000,
            })
        },
    },
    Preset {
        name: "contaminated",
        description: "Gaussian hierarchy, K = 20 with 4 locals in the prior tails, under-matching from L0 = 10",
        config: || {
            json!({
                "model": { "name": "gaussian-hierarchy", "n": 10 },
                "sampler": "smc-um",
                "data": { "source": "synthetic", "K": 20, "contaminate": 4 },
                "N": 1000,
                "L0": 10,
            })
        },
    },
    Preset {
        name: "sir-synthetic",
        description: "SIR, 5 synthetic departments at R0 = 3, permABC-SMC under a 1e5 call budget",
        config: || {
            json!({
                "model": { "name": "sir" },
                "sampler": "smc",
                "data": { "source": "synthetic", "K": 5, "truth_global": [3.0] },
                "N": 500,
                "budget": 100_000,
            })
        },
    },
    Preset {
        name: "sir-csv",
        description: "SIR on departmental admissions, mainland-94 filter, March to July 2020",
        config: || {
            json!({
                "model": { "name": "sir" },
                "sampler": "smc",
                "data": {
                    "source": "csv",
                    "path": "data/hospital-admissions.csv",
                    "filter": "mainland-94",
                    "date_from": "2020-03-18",
                    "date_to": "2020-07-31",
                },
                "N": 1000,
                "budget": 10_000_000,
            })
        },
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
