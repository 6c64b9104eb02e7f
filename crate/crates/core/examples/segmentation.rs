//! Plain, di-tone and tri-tone segments of the same unit boundaries.

use tonelab::segment::{segment_intervals, FrameInterval, SegmentMode};

fn main() -> tonelab::Result<()> {
    let bounds = [FrameInterval::new(0, 6), FrameInterval::new(6, 30), FrameInterval::new(30, 35), FrameInterval::new(35, 57)];
    for mode in [SegmentMode::Plain, SegmentMode::Ditone, SegmentMode::Tritone] {
        let iv = segment_intervals(&bounds, 60, mode)?;
        let spans: Vec<String> = iv.iter().map(|i| format!("[{}, {})", i.start, i.end)).collect();
        println!("{:>8}: {}", mode.as_str(), spans.join(" "));
    }
    Ok(())
}
