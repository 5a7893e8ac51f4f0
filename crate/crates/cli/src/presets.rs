//! Built-in parameter presets for the published experiment settings.
//!
//! Inpainting presets carry sigma = sqrt(2). The CS presets carry the
//! residual-scale sigma values calibrated for 8-bit pixels (15/50/100 for
//! subrates 0.1/0.2/0.3); see the project README for how they were fixed.

use gslr_core::restore::SolverConfig;

pub const NAMES: [&str; 8] = [
    "inpaint-80",
    "inpaint-70",
    "inpaint-60",
    "inpaint-50",
    "inpaint-text",
    "cs-10",
    "cs-20",
    "cs-30",
];

pub fn names() -> Vec<&'static str> {
    NAMES.to_vec()
}

/// Resolves a preset name to its full configuration.
pub fn lookup(name: &str) -> Option<SolverConfig> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let inpaint = SolverConfig {
        patch: 8,
        group_size: 60,
        window: 25,
        stride: 4,
        sigma: sqrt2,
        eps_w: 0.1,
        eps_l: 0.3,
        iters: 60,
        ..SolverConfig::default()
    };
    let cs = SolverConfig {
        patch: 7,
        group_size: 60,
        window: 20,
        stride: 4,
        eps_w: 0.1,
        eps_l: 0.4,
        iters: 100,
        ..SolverConfig::default()
    };
    let cfg = match name {
        "inpaint-80" => SolverConfig {
            rho: 0.0003,
            p: 0.45,
            ..inpaint
        },
        "inpaint-70" => SolverConfig {
            rho: 0.0003,
            p: 0.45,
            ..inpaint
        },
        "inpaint-60" => SolverConfig {
            rho: 0.03,
            p: 1.0,
            ..inpaint
        },
        "inpaint-50" => SolverConfig {
            rho: 0.04,
            p: 1.0,
            ..inpaint
        },
        "inpaint-text" => SolverConfig {
            patch: 10,
            rho: 0.06,
            p: 0.95,
            ..inpaint
        },
        "cs-10" => SolverConfig {
            rho: 0.0001,
            p: 0.65,
            sigma: 15.0,
            ..cs
        },
        "cs-20" => SolverConfig {
            rho: 0.0005,
            p: 0.5,
            sigma: 50.0,
            ..cs
        },
        "cs-30" => SolverConfig {
            rho: 0.05,
            p: 1.0,
            sigma: 100.0,
            ..cs
        },
        _ => return None,
    };
    Some(cfg)
}
