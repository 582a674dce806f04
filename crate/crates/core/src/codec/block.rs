//! Splitting planes into level-shifted 8×8 blocks and reassembling them.

use super::image::Plane;

pub const BLOCK: usize = 8;

/// Colour channel a grid of blocks belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Y,
    Cb,
    Cr,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Y, Channel::Cb, Channel::Cr];

    pub fn is_luma(self) -> bool {
        self == Channel::Y
    }
}

/// Per-channel grid of 8×8 blocks in raster order.
///
/// Block entries are stored row-major: index `v * 8 + u` holds vertical
/// frequency (or row) `v` and horizontal frequency (or column) `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid<T = i32> {
    pub channel: Channel,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    /// Unpadded image dimensions.
    pub width: usize,
    pub height: usize,
    pub blocks: Vec<[T; 64]>,
}

impl<T: Copy + Default> CoefficientGrid<T> {
    pub fn zeros(channel: Channel, width: usize, height: usize) -> Self {
        let (blocks_wide, blocks_high) = block_dims(width, height);
        Self {
            channel,
            blocks_wide,
            blocks_high,
            width,
            height,
            blocks: vec![[T::default(); 64]; blocks_wide * blocks_high],
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn map<U>(&self, f: impl Fn(&[T; 64]) -> [U; 64]) -> CoefficientGrid<U> {
        CoefficientGrid {
            channel: self.channel,
            blocks_wide: self.blocks_wide,
            blocks_high: self.blocks_high,
            width: self.width,
            height: self.height,
            blocks: self.blocks.iter().map(f).collect(),
        }
    }
}

/// Number of blocks across and down needed to cover `width`×`height`.
pub fn block_dims(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(BLOCK), height.div_ceil(BLOCK))
}

/// Pads `plane` to a multiple of 8 by edge replication, cuts it into 8×8
/// blocks and level-shifts every sample by −128.
pub fn partition_blocks(plane: &Plane, channel: Channel) -> CoefficientGrid<f64> {
    assert!(plane.width > 0 && plane.height > 0, "plane must be non-empty");
    let (bw, bh) = block_dims(plane.width, plane.height);
    let mut blocks = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut block = [0.0; 64];
            for r in 0..BLOCK {
                let y = (by * BLOCK + r).min(plane.height - 1);
                for c in 0..BLOCK {
                    let x = (bx * BLOCK + c).min(plane.width - 1);
                    block[r * BLOCK + c] = plane.at(x, y) - 128.0;
                }
            }
            blocks.push(block);
        }
    }
    CoefficientGrid {
        channel,
        blocks_wide: bw,
        blocks_high: bh,
        width: plane.width,
        height: plane.height,
        blocks,
    }
}

/// Inverse of [`partition_blocks`]: undoes the level shift and crops the padding.
pub fn assemble_blocks(grid: &CoefficientGrid<f64>) -> Plane {
    let mut plane = Plane::filled(grid.width, grid.height, 0.0);
    for y in 0..grid.height {
        let (by, r) = (y / BLOCK, y % BLOCK);
        for x in 0..grid.width {
            let (bx, c) = (x / BLOCK, x % BLOCK);
            plane.data[y * grid.width + x] = grid.blocks[by * grid.blocks_wide + bx][r * BLOCK + c] + 128.0;
        }
    }
    plane
}
