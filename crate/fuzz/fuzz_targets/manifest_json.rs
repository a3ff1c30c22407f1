#![no_main]

use libfuzzer_sys::fuzz_target;
use sounder_core::manifest::CampaignManifest;
use sounder_core::synth::TruthModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = CampaignManifest::from_json(text) {
        let json = m.to_json().expect("valid manifest serializes");
        CampaignManifest::from_json(&json).expect("serialized manifest parses");
    }
    if let Ok(t) = serde_json::from_str::<TruthModel>(text) {
        let _ = t.validate(&CampaignManifest::default_corridor(sounder_core::manifest::DistanceMode::D2));
    }
});
