#![no_main]

use crisp_cli::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = ExperimentConfig::parse(data) {
        // Resolution fills defaults; it must never panic on parsed input.
        if let Some(scene) = config.scene {
            let _ = scene.resolve(None);
        }
        if let Some(p) = config.perturbation {
            let _ = p.resolve();
        }
        if let Some(c) = config.corrector {
            let _ = c.resolve();
        }
        if let Some(c) = config.certificate {
            let _ = c.resolve();
        }
        if let Some(s) = config.selftrain {
            let _ = s.resolve();
        }
    }
});
