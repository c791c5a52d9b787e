//! Sparse convolution, downsampling and generative upsampling on a toy
//! tensor.

use sedd_pcc::sparse::layers::tensor_from_unsorted;
use sedd_pcc::sparse::{generative_upconv, prune_topk_tensor, sparse_conv, ConvParams, Kernel};

fn main() -> sedd_pcc::Result<()> {
    let coords: Vec<[i32; 3]> = (0..4).flat_map(|x| (0..4).map(move |y| [x, y, 0])).collect();
    let feats = coords.iter().map(|c| vec![c[0] as f64, c[1] as f64]).collect();
    let x = tensor_from_unsorted(coords, feats, 1)?;

    let mut smooth = ConvParams::zeros(Kernel::Cube3, 2, 1);
    smooth.weight.iter_mut().for_each(|w| *w = 1.0 / 27.0);
    let y = sparse_conv(&x, &smooth)?;
    println!("3x3x3 conv keeps {} voxels at stride {}", y.len(), y.stride());

    let mut pool = ConvParams::zeros(Kernel::Down2, 2, 2);
    for tap in 0..8 {
        pool.weight[tap * 4] = 0.125;
        pool.weight[tap * 4 + 3] = 0.125;
    }
    let down = sparse_conv(&x, &pool)?;
    println!("2x2x2 stride-2 conv: {} -> {} voxels", x.len(), down.len());

    let up = generative_upconv(&down, &ConvParams::zeros(Kernel::Up2, 2, 1))?;
    println!("generative upconv proposes {} children", up.len());
    let logits: Vec<f64> = up.coords.coords().iter().map(|c| -(c[2] as f64)).collect();
    let kept = prune_topk_tensor(&up, &logits, x.len())?;
    println!("top-{} pruning keeps the z = 0 plane: {}", x.len(), kept.coords.coords().iter().all(|c| c[2] == 0));
    Ok(())
}
