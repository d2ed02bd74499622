#![allow(dead_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use handstate::association::write_parses;
use handstate::data_model::{write_annotations, ContactState, HandSide, ImageRecord, Point};
use handstate::mesh_quality::{rotate_point, MeshRecord, RecordedView, RecordedViews};
use handstate::synth::{contact_video, generate_dataset, SceneConfig};

/// Runs the CLI in-process; `args` excludes the program name.
pub fn run(args: &[&str]) -> i32 {
    handstate_cli::run(std::iter::once("handstate").chain(args.iter().copied()))
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_handstate"))
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Synthetic scenes as `<dir>/annotations.jsonl` plus `<dir>/images/<id>.png`.
pub fn write_dataset(dir: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf, Vec<ImageRecord>) {
    let data = generate_dataset(n, seed, &SceneConfig::default());
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for (rec, img) in &data {
        img.save(images.join(format!("{}.png", rec.image_id))).unwrap();
    }
    let set: Vec<ImageRecord> = data.into_iter().map(|d| d.0).collect();
    let ann = dir.join("annotations.jsonl");
    write_annotations(BufWriter::new(File::create(&ann).unwrap()), &set).unwrap();
    (ann, images, set)
}

/// One synthetic video: a parse file `<dir>/<name>.jsonl` and one still
/// frame per parse in `frames`. Returns the per-hand state sequences.
pub fn write_video(dir: &Path, frames: &Path, name: &str, seed: u64, n_frames: usize, n_hands: usize) -> (PathBuf, Vec<Vec<ContactState>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut parses, states) = contact_video(&mut rng, n_frames, n_hands);
    std::fs::create_dir_all(frames).unwrap();
    let still = RgbImage::from_fn(320, 240, |x, y| Rgb([(x % 97) as u8 * 2, (y % 89) as u8 * 2, 90]));
    for (t, parse) in parses.iter_mut().enumerate() {
        parse.image_id = format!("{name}_{t:05}");
        still.save(frames.join(format!("{}.png", parse.image_id))).unwrap();
    }
    let path = dir.join(format!("{name}.jsonl"));
    write_parses(BufWriter::new(File::create(&path).unwrap()), &parses).unwrap();
    (path, states)
}

/// Recorded reconstructions of `n` crops: rotating the joints back recovers
/// the unrotated joints up to noise that grows with the crop index.
pub fn write_views(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..n {
        let size = 64.0;
        let c = Point::new(size / 2.0, size / 2.0);
        let joints: Vec<Point> = (0..21).map(|_| Point::new(rng.gen_range(16.0..48.0), rng.gen_range(16.0..48.0))).collect();
        let noise = i as f64 * 0.2;
        let views = [-20.0, -10.0, 10.0, 20.0]
            .iter()
            .map(|&angle| RecordedView {
                angle,
                joints_2d: joints
                    .iter()
                    .map(|&j| {
                        let q = rotate_point(j, c, angle);
                        [q.x + rng.gen_range(-noise..=noise), q.y + rng.gen_range(-noise..=noise)]
                    })
                    .collect(),
            })
            .collect();
        let theta: Vec<f64> = (0..6).map(|k| (i % 3) as f64 * 5.0 + k as f64 * 0.1 + rng.gen_range(-0.2..0.2)).collect();
        out.push(RecordedViews {
            image_id: format!("img_{i:03}"),
            bbox: handstate::data_model::BBox::new(10.0, 10.0, 74.0, 74.0).unwrap(),
            side: if i % 2 == 0 { HandSide::Left } else { HandSide::Right },
            crop_size: size,
            mesh: MeshRecord {
                theta,
                beta: None,
                joints_2d: joints.iter().map(|j| [j.x, j.y]).collect(),
                side: HandSide::Left,
            },
            views,
        });
    }
    let mut text = String::new();
    for r in &out {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
