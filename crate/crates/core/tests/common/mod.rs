//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use grpcoll::nn::*;
use grpcoll::rng::Rng64;

pub fn random_batch(rng: &mut Rng64, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.normal()).collect()
}

/// Small random architecture; kinds cycle so every layer kind is covered.
pub fn random_model(i: usize, rng: &mut Rng64) -> NetworkModel {
    let classes = 2 + rng.below(3);
    match i % 3 {
        0 => {
            let d = 2 + rng.below(6);
            let hidden: Vec<usize> = (0..1 + rng.below(2)).map(|_| 2 + rng.below(6)).collect();
            build_mlp(d, &hidden, classes, 0.3, rng.next_seed()).unwrap()
        }
        1 => {
            // dense -> softmax -> dense exercises softmax as a hidden layer
            let d = 3 + rng.below(4);
            let h = 3 + rng.below(4);
            let mut m = NetworkModel::new(
                d,
                Shape::flat(d),
                classes,
                vec![
                    Layer::dense(d, h),
                    Layer::Softmax { len: h },
                    Layer::dense(h, classes),
                    Layer::Softmax { len: classes },
                ],
            )
            .unwrap();
            m.initialize(rng.next_seed());
            m
        }
        _ => {
            let ch = 1 + rng.below(2);
            let side = if rng.below(2) == 0 { 12 } else { 16 };
            let input = Shape::image(ch, side, side);
            let mut layers = vec![Layer::conv2d(input, 2 + rng.below(2))];
            layers.push(Layer::MaxPool {
                input: layers[0].output_shape(),
            });
            layers.push(Layer::Relu {
                shape: layers[1].output_shape(),
            });
            if side == 16 {
                let c2 = Layer::conv2d(layers[2].output_shape(), 2);
                let p2 = Layer::MaxPool {
                    input: c2.output_shape(),
                };
                let r2 = Layer::Relu {
                    shape: p2.output_shape(),
                };
                layers.extend([c2, p2, r2]);
            }
            let flat = layers.last().unwrap().output_shape().len();
            layers.push(Layer::dense(flat, 4));
            layers.push(Layer::Relu {
                shape: Shape::flat(4),
            });
            layers.push(Layer::Dropout {
                rate: 0.25,
                shape: Shape::flat(4),
            });
            layers.push(Layer::dense(4, classes));
            layers.push(Layer::Softmax { len: classes });
            // an odd input dim exercises zero padding too
            let dim = input.len() - rng.below(3);
            let mut m = NetworkModel::new(dim, input, classes, layers).unwrap();
            m.initialize(rng.next_seed());
            m
        }
    }
}
