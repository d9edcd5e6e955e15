//! On-disk dataset layout:
//!
//! ```text
//! DIR/manifest.json
//! DIR/{train,val,test}/labels.csv
//! DIR/{train,val,test}/sample_%06d.{vis,aud,tac}.vatt
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{DatasetSplits, Manifest, MultimodalSample, OneHot, Split, RENDERER_VERSION};
use crate::error::{format_err, Error, Result};
use crate::tensor_io::Tensor;

const MANIFEST: &str = "manifest.json";
const LABELS: &str = "labels.csv";

fn sample_path(dir: &Path, id: u64, kind: &str) -> std::path::PathBuf {
    dir.join(format!("sample_{id:06}.{kind}.vatt"))
}

pub fn save_dataset(splits: &DatasetSplits, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let shape = splits.manifest.shape;
    let image_dims = vec![shape.height, shape.width, 3];
    for split in Split::ALL {
        let sub = dir.join(split.name());
        fs::create_dir_all(&sub)?;
        let samples = splits.split(split);
        let mut labels = String::from("sample_id,class_id\n");
        for s in samples {
            labels.push_str(&format!("{},{}\n", s.id, s.class()));
        }
        fs::write(sub.join(LABELS), labels)?;
        samples.par_iter().try_for_each(|s| -> Result<()> {
            Tensor::f32(image_dims.clone(), s.visual.clone())?.write(sample_path(&sub, s.id, "vis"))?;
            Tensor::f32(vec![s.audio.len()], s.audio.clone())?.write(sample_path(&sub, s.id, "aud"))?;
            Tensor::f32(image_dims.clone(), s.tactile.clone())?.write(sample_path(&sub, s.id, "tac"))?;
            Ok(())
        })?;
    }
    // manifest last: a directory with a manifest is complete
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&splits.manifest)?)?;
    Ok(())
}

fn read_labels(path: &Path, num_classes: usize) -> Result<Vec<(u64, OneHot)>> {
    let text = fs::read_to_string(path).map_err(|e| format_err(path, e.to_string()))?;
    let mut lines = text.lines();
    if lines.next() != Some("sample_id,class_id") {
        return Err(format_err(path, "missing header `sample_id,class_id`"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || format_err(path, format!("malformed row {}: {line:?}", i + 2));
            let (id, class) = line.split_once(',').ok_or_else(bad)?;
            let id: u64 = id.trim().parse().map_err(|_| bad())?;
            let class: usize = class.trim().parse().map_err(|_| bad())?;
            let label = OneHot::new(class, num_classes).map_err(|_| bad())?;
            Ok((id, label))
        })
        .collect()
}

fn read_f32(path: &Path, dims: &[usize]) -> Result<Vec<f32>> {
    let t = Tensor::read(path)?;
    if t.shape != dims {
        return Err(Error::Incompatible(format!(
            "{} has shape {:?}, manifest expects {dims:?}",
            path.display(),
            t.shape
        )));
    }
    t.into_f32().ok_or_else(|| format_err(path, "expected f32 payload"))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetSplits> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| format_err(&manifest_path, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| format_err(&manifest_path, e.to_string()))?;
    if manifest.version != RENDERER_VERSION {
        return Err(Error::Incompatible(format!(
            "dataset version {:?} does not match renderer {RENDERER_VERSION:?}",
            manifest.version
        )));
    }
    let shape = manifest.shape;
    let image_dims = [shape.height, shape.width, 3];
    let audio_dims = [shape.audio_len];
    let load_split = |split: Split, expected: usize| -> Result<Vec<MultimodalSample>> {
        let sub = dir.join(split.name());
        let labels = read_labels(&sub.join(LABELS), manifest.num_classes)?;
        if labels.len() != expected {
            return Err(Error::Incompatible(format!(
                "{} split has {} samples, manifest says {expected}",
                split.name(),
                labels.len()
            )));
        }
        labels
            .into_par_iter()
            .map(|(id, label)| {
                Ok(MultimodalSample {
                    id,
                    visual: read_f32(&sample_path(&sub, id, "vis"), &image_dims)?,
                    audio: read_f32(&sample_path(&sub, id, "aud"), &audio_dims)?,
                    tactile: read_f32(&sample_path(&sub, id, "tac"), &image_dims)?,
                    label,
                })
            })
            .collect()
    };
    let counts = manifest.counts;
    let train = load_split(Split::Train, counts.train)?;
    let val = load_split(Split::Val, counts.val)?;
    let test = load_split(Split::Test, counts.test)?;
    Ok(DatasetSplits {
        train,
        val,
        test,
        manifest,
    })
}
