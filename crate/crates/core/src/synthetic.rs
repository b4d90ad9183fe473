//! Synthetic data: stand-ins with the archive datasets' shapes and label
//! sets, plus random series for property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_ts, Dataset, DatasetCard, Series, TimeSeriesSample, TsHeader};
use crate::error::DatasetError;

/// Split sizes, dimensions, length and class labels of an archive dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetShape {
    pub code: &'static str,
    pub name: &'static str,
    pub train: usize,
    pub test: usize,
    pub dimensions: usize,
    pub length: usize,
    pub classes: Vec<String>,
}

fn numbered(n: usize, suffix: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{i}{suffix}")).collect()
}

fn names(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

/// Shapes of the ten archive datasets with tuned profiles.
pub fn archive_shapes() -> Vec<DatasetShape> {
    let shape = |code, name, train, test, dimensions, length, classes| DatasetShape { code, name, train, test, dimensions, length, classes };
    vec![
        shape("AWR", "ArticularyWordRecognition", 275, 300, 9, 144, numbered(25, ".0")),
        shape("AF", "AtrialFibrillation", 15, 15, 2, 640, names(&["n", "s", "t"])),
        shape("BL", "Blink", 500, 450, 4, 510, names(&["longblink", "shortblink"])),
        shape("CR", "Cricket", 108, 72, 6, 1197, numbered(12, ".0")),
        shape("ER", "ERing", 30, 270, 4, 65, numbered(6, "")),
        shape("FM", "FingerMovements", 316, 100, 28, 50, names(&["left", "right"])),
        shape("RS", "RacketSports", 152, 152, 6, 30, names(&["Badminton_Smash", "Badminton_Clear", "Squash_ForehandBoast", "Squash_BackhandBoast"])),
        shape("SRS2", "SelfRegulationSCP2", 200, 180, 7, 1152, names(&["negativity", "positivity"])),
        shape("SWJ", "StandWalkJump", 12, 15, 4, 2500, names(&["standing", "walking", "jumping"])),
        shape("UWG", "UWaveGestureLibrary", 120, 320, 3, 315, numbered(8, ".0")),
    ]
}

pub fn archive_shape(code_or_name: &str) -> Option<DatasetShape> {
    archive_shapes().into_iter().find(|s| s.code.eq_ignore_ascii_case(code_or_name) || s.name.eq_ignore_ascii_case(code_or_name))
}

/// Per-class sinusoid prototypes plus uniform noise. Labels cycle through
/// the classes so every class appears in both splits when sizes allow.
pub fn generate_splits(shape: &DatasetShape, seed: u64, noise: f64) -> (Vec<TimeSeriesSample>, Vec<TimeSeriesSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, m) = (shape.length, shape.dimensions);
    let prototypes: Vec<Vec<(f64, f64, f64)>> = shape
        .classes
        .iter()
        .map(|_| (0..m).map(|_| (rng.random_range(0.5..4.0), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.5..2.0))).collect())
        .collect();
    let split = |n: usize, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|id| {
                let c = id % shape.classes.len();
                let proto = &prototypes[c];
                let shift = rng.random_range(-0.3..0.3);
                let mut data = Vec::with_capacity(t * m);
                for i in 0..t {
                    let x = i as f64 / t as f64 * std::f64::consts::TAU;
                    for &(freq, phase, amp) in proto {
                        data.push(amp * (freq * x + phase + shift).sin() + noise * rng.random_range(-1.0..1.0));
                    }
                }
                TimeSeriesSample { id, values: Series::from_row_major(t, m, data).expect("shape"), label: shape.classes[c].clone() }
            })
            .collect::<Vec<_>>()
    };
    let train = split(shape.train, &mut rng);
    let test = split(shape.test, &mut rng);
    (train, test)
}

/// A stand-in dataset; `card` defaults to placeholder text.
pub fn standin_dataset(shape: &DatasetShape, seed: u64, card: Option<DatasetCard>) -> Result<Dataset, DatasetError> {
    let (train, test) = generate_splits(shape, seed, 0.8);
    Dataset::new(shape.name, train, test, shape.classes.clone(), card)
}

pub fn ts_header(shape: &DatasetShape) -> TsHeader {
    TsHeader {
        problem_name: shape.name.to_string(),
        univariate: shape.dimensions == 1,
        dimensions: shape.dimensions,
        series_length: shape.length,
        class_labels: shape.classes.clone(),
    }
}

/// Writes `<name>_TRAIN.ts` and `<name>_TEST.ts` for a stand-in into `dir`.
pub fn write_standin_files(dir: &std::path::Path, shape: &DatasetShape, seed: u64) -> std::io::Result<()> {
    let (train, test) = generate_splits(shape, seed, 0.8);
    let header = ts_header(shape);
    std::fs::write(dir.join(format!("{}_TRAIN.ts", shape.name)), write_ts(&header, &train))?;
    std::fs::write(dir.join(format!("{}_TEST.ts", shape.name)), write_ts(&header, &test))
}

/// A `t x m` series with entries uniform in `[-scale, scale]`.
pub fn random_series<R: Rng>(rng: &mut R, t: usize, m: usize, scale: f64) -> Series {
    let data = (0..t * m).map(|_| rng.random_range(-scale..=scale)).collect();
    Series::from_row_major(t, m, data).expect("shape")
}
