//! Video → flow → features, one sample at a time.

use setr_core::features::{extract_spatial_features, SampleRecord};
use setr_core::flow::{dequantize, quantize, tv_l1_flow, TvL1Params};

use crate::error::{Result, SetrError};
use crate::formats::{FlowFile, VideoFile};

/// TV-L1 flow between every consecutive frame pair, clipped to `clip`
/// pixels and quantized. Only motion leaves this function.
pub fn extract_flow(video: &VideoFile, params: &TvL1Params, clip: f64) -> Result<FlowFile> {
    let frames = video.to_frames()?;
    if frames.len() < 2 {
        return Err(SetrError::Config("a video needs at least two frames".into()));
    }
    let pairs = frames
        .windows(2)
        .map(|w| Ok(quantize(&tv_l1_flow(&w[0], &w[1], params)?, clip)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowFile {
        width: video.width,
        height: video.height,
        clip,
        pairs,
    })
}

/// Per-frame descriptors of a flow file as a labelled sample.
pub fn featurize(
    flow: &FlowFile,
    sample_id: &str,
    patient_id: &str,
    label: usize,
    duration: f64,
) -> Result<SampleRecord> {
    let fields = flow.pairs.iter().map(dequantize).collect::<setr_core::Result<Vec<_>>>()?;
    let descriptors = extract_spatial_features(&fields)?;
    Ok(SampleRecord::from_descriptors(sample_id, patient_id, label, duration, &descriptors)?)
}
