//! Shared fixtures for the criterion benchmarks: a realized full-size
//! channel and the pieces a hot loop needs around it.

use airnoma_core::channel::{sample_user_positions, ChannelRealization, ChannelSampler};
use airnoma_core::{RngStream, ScenarioConfig};

/// Full-size scenario with resolved user positions, its sampler, and one
/// fading realization drawn from a fixed seed.
pub fn table_fixture() -> (ScenarioConfig, ChannelSampler, ChannelRealization) {
    let mut rng = RngStream::from_seed(11);
    let mut scenario = ScenarioConfig::table_defaults();
    scenario.user_positions = sample_user_positions(&mut rng, &scenario);
    let sampler = ChannelSampler::new(scenario.clone()).expect("sampler builds");
    let aods = sampler.sample_aods(&mut rng);
    let real = sampler.realize(&mut rng, &aods).expect("channel realizes");
    (scenario, sampler, real)
}
