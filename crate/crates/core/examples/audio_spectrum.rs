//! Print the strongest spectral peaks of each object's impact sound.
//! Objects differ in their modal frequencies, which is what the audio branch
//! has to pick up.

use vatcmr::dataset::{build_dataset, magnitude_spectrum, spectrogram, DatasetConfig, SplitCounts};

fn main() -> vatcmr::Result<()> {
    let data = build_dataset(&DatasetConfig {
        num_classes: 4,
        counts: SplitCounts {
            train: 4,
            val: 4,
            test: 4,
        },
        ..DatasetConfig::default()
    })?;
    let shape = data.shape();
    let hz_per_bin = shape.sample_rate as f64 / shape.audio_len as f64;
    for s in &data.train {
        let spectrum = magnitude_spectrum(&s.audio);
        let mut bins: Vec<usize> = (1..spectrum.len() - 1)
            .filter(|&k| spectrum[k] > spectrum[k - 1] && spectrum[k] >= spectrum[k + 1])
            .collect();
        bins.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]));
        let peaks: Vec<String> = bins
            .iter()
            .take(3)
            .map(|&k| format!("{:.0} Hz", k as f64 * hz_per_bin))
            .collect();
        let frames = spectrogram(&s.audio, 256, 128);
        let decay: Vec<String> = frames
            .iter()
            .step_by((frames.len() / 4).max(1))
            .map(|f| format!("{:.2}", f.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .collect();
        println!(
            "class {}: peaks {}, frame energy {}",
            s.class(),
            peaks.join(", "),
            decay.join(" > ")
        );
    }
    Ok(())
}
