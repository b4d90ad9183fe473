//! Dataset cards for the profiled archive datasets, compiled in so a bare
//! archive directory can be used as is.

use crate::dataset::DatasetCard;

macro_rules! card {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../datasets/", $name, "/", $name, "_card.json")))
    };
}

const CARDS: [(&str, &str); 10] = [
    card!("ArticularyWordRecognition"),
    card!("AtrialFibrillation"),
    card!("Blink"),
    card!("Cricket"),
    card!("ERing"),
    card!("FingerMovements"),
    card!("RacketSports"),
    card!("SelfRegulationSCP2"),
    card!("StandWalkJump"),
    card!("UWaveGestureLibrary"),
];

/// The built-in card of an archive dataset, by archive name.
pub fn builtin_card(name: &str) -> Option<DatasetCard> {
    CARDS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, json)| serde_json::from_str(json).expect("built-in card parses"))
}
