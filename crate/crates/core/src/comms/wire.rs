//! Binary wire format of a [`DetectionMessage`].
//!
//! All fields are little-endian. Layout (47-byte header, then three sections):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 1    | format version (`WIRE_VERSION`)         |
//! | 1      | 4    | sender id, u32                          |
//! | 5      | 4    | receiver id, u32                        |
//! | 9      | 8    | timestamp, u64                          |
//! | 17     | 24   | sender ego origin in world, 3 x f64     |
//! | 41     | 2    | K, projected 2D point count, u16        |
//! | 43     | 2    | K3, 3D box count, u16                   |
//! | 45     | 2    | KB, background assertion count, u16     |
//! | 47     | 12K  | points: x, y, score as f32 (world)      |
//! |        | 32K3 | boxes: x, y, z, w, h, l, yaw, score f32 |
//! |        | 12KB | background: x, y, certainty as f32      |
//!
//! The detection section (points + boxes) is exactly `12 K + 32 K3` bytes.

use super::{BackgroundAssertion, DetectionMessage, ProjectedPoint, WireBox};
use crate::error::{Error, Result};

pub const WIRE_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 1 + 4 + 4 + 8 + 3 * 8 + 3 * 2;
pub const POINT_BYTES: usize = 3 * 4;
pub const BOX_BYTES: usize = 8 * 4;
pub const BACKGROUND_BYTES: usize = 3 * 4;

fn put_f32s(out: &mut Vec<u8>, vals: &[f32]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn count_u16(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| Error::Wire(format!("{n} {what} exceed the u16 count field")))
}

pub fn encode(msg: &DetectionMessage) -> Result<Vec<u8>> {
    let k2 = count_u16(msg.points_2d.len(), "2D points")?;
    let k3 = count_u16(msg.boxes_3d.len(), "3D boxes")?;
    let kb = count_u16(msg.background.len(), "background assertions")?;
    let mut out = Vec::with_capacity(HEADER_BYTES + msg.payload_bytes());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&msg.sender_id.to_le_bytes());
    out.extend_from_slice(&msg.receiver_id.to_le_bytes());
    out.extend_from_slice(&msg.timestamp.to_le_bytes());
    for v in msg.sender_origin {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&k2.to_le_bytes());
    out.extend_from_slice(&k3.to_le_bytes());
    out.extend_from_slice(&kb.to_le_bytes());
    for p in &msg.points_2d {
        put_f32s(&mut out, &[p.x, p.y, p.score]);
    }
    for b in &msg.boxes_3d {
        put_f32s(&mut out, &b.as_array());
    }
    for a in &msg.background {
        put_f32s(&mut out, &[a.x, a.y, a.certainty]);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Wire(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn f32s<const N: usize>(&mut self) -> Result<[f32; N]> {
        let mut out = [0f32; N];
        for v in out.iter_mut() {
            *v = f32::from_le_bytes(self.take::<4>()?);
        }
        Ok(out)
    }
}

pub fn decode(bytes: &[u8]) -> Result<DetectionMessage> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let [version] = r.take::<1>()?;
    if version != WIRE_VERSION {
        return Err(Error::Wire(format!("unsupported version {version}")));
    }
    let sender_id = u32::from_le_bytes(r.take()?);
    let receiver_id = u32::from_le_bytes(r.take()?);
    let timestamp = u64::from_le_bytes(r.take()?);
    let mut sender_origin = [0.0; 3];
    for v in sender_origin.iter_mut() {
        *v = f64::from_le_bytes(r.take()?);
    }
    let k2 = u16::from_le_bytes(r.take()?) as usize;
    let k3 = u16::from_le_bytes(r.take()?) as usize;
    let kb = u16::from_le_bytes(r.take()?) as usize;
    let expected = HEADER_BYTES + k2 * POINT_BYTES + k3 * BOX_BYTES + kb * BACKGROUND_BYTES;
    if bytes.len() != expected {
        return Err(Error::Wire(format!(
            "length {} does not match header counts (expected {expected})",
            bytes.len()
        )));
    }
    let mut points_2d = Vec::with_capacity(k2);
    for _ in 0..k2 {
        let [x, y, score] = r.f32s::<3>()?;
        points_2d.push(ProjectedPoint { x, y, score });
    }
    let mut boxes_3d = Vec::with_capacity(k3);
    for _ in 0..k3 {
        boxes_3d.push(WireBox::from_array(r.f32s::<8>()?));
    }
    let mut background = Vec::with_capacity(kb);
    for _ in 0..kb {
        let [x, y, certainty] = r.f32s::<3>()?;
        background.push(BackgroundAssertion { x, y, certainty });
    }
    Ok(DetectionMessage {
        sender_id,
        receiver_id,
        timestamp,
        sender_origin,
        points_2d,
        boxes_3d,
        background,
    })
}
