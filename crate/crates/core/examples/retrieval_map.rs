//! Rank a small labeled index and compute average precision by hand.

use vatcmr::encoders::Modality;
use vatcmr::model::Space;
use vatcmr::retrieval::{average_precision, mean_average_precision, rank, IndexEntry, RetrievalIndex};

fn main() -> vatcmr::Result<()> {
    let points = [
        ([0.0, 0.0], 0),
        ([0.1, 0.0], 0),
        ([1.0, 1.0], 1),
        ([0.0, 0.3], 0),
        ([1.2, 0.9], 1),
        ([0.2, 0.2], 1),
    ];
    let entries = points
        .iter()
        .enumerate()
        .map(|(i, (v, label))| IndexEntry {
            vector: v.to_vec(),
            label: *label,
            id: i as u64,
        })
        .collect();
    let index = RetrievalIndex::new(entries, Space::Fused(Modality::Vision, Modality::Touch))?;

    let query = vec![0.05, 0.05];
    let ranked = rank(&query, &index)?;
    for item in &ranked.items {
        println!("id {}  label {}  distance {:.3}", item.id, item.label, item.distance);
    }
    println!("AP for class 0: {:.4}", average_precision(&ranked.labels(), 0)?);

    // A, B, A, B, A: hits at ranks 1, 3, 5.
    println!(
        "AP(A,B,A,B,A) = {:.6} (34/45 = {:.6})",
        average_precision(&[0, 1, 0, 1, 0], 0)?,
        34.0 / 45.0
    );

    let queries = vec![(query, 0), (vec![1.1, 1.0], 1)];
    println!("MAP over two queries: {:.4}", mean_average_precision(&queries, &index)?);
    Ok(())
}
