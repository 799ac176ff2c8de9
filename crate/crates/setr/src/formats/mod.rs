//! Binary file formats. All integers and floats are little-endian and
//! every file starts with an 8-byte magic tag.
//!
//! | file       | magic      | body                                                           |
//! |------------|------------|----------------------------------------------------------------|
//! | checkpoint | `SETRCKPT` | version u32, count u32, then per array: name, rank u32, dims u64, f64 data |
//! | video      | `SETRVID0` | width u32, height u32, frames u32, fps f64, 8-bit gray frames  |
//! | flow       | `SETRFLW0` | width u32, height u32, pairs u32, clip f64, u plane then v plane per pair |
//! | features   | `SETRFEAT` | version u32, sample id, patient id, label u8, duration f64, frames u32, dim u32, f32 data |
//!
//! Strings are a u32 byte length followed by UTF-8.

mod checkpoint;
mod features;
mod flow;
mod video;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use features::{decode_features, encode_features, read_dataset, read_features, write_features};
pub use flow::{decode_flow, encode_flow, read_flow, write_flow, FlowFile};
pub use video::{decode_video, encode_video, read_video, write_video, VideoFile};
