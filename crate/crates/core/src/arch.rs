//! Layer shapes of the standard ResNet-32, ResNet-18 and VGG-16 topologies
//! for CIFAR-100 (32x32, 100 classes) and TinyImageNet (64x64, 200 classes).
//!
//! Pooling is folded into the following linear layer, batch-norm into the
//! preceding convolution. Each ResNet block has a ReLU after its first
//! convolution and one after the residual add; a 1x1 projection shortcut is
//! used whenever the block changes resolution or width.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchLayer {
    Linear(LinearShape),
    Relu(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearShape {
    pub macs: u64,
    pub input_elements: u64,
    pub output_elements: u64,
    /// Spatial positions of the output (1 for fully connected layers).
    pub output_hw: u64,
    pub in_channels: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    ResNet32,
    Vgg16,
    ResNet18,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataset {
    Cifar100,
    TinyImageNet,
}

impl Model {
    pub fn slug(self) -> &'static str {
        match self {
            Model::ResNet32 => "resnet32",
            Model::Vgg16 => "vgg16",
            Model::ResNet18 => "resnet18",
        }
    }
}

impl Dataset {
    pub fn slug(self) -> &'static str {
        match self {
            Dataset::Cifar100 => "cifar100",
            Dataset::TinyImageNet => "tinyimagenet",
        }
    }

    pub fn side(self) -> u64 {
        match self {
            Dataset::Cifar100 => 32,
            Dataset::TinyImageNet => 64,
        }
    }

    pub fn classes(self) -> u64 {
        match self {
            Dataset::Cifar100 => 100,
            Dataset::TinyImageNet => 200,
        }
    }
}

/// The six bundled model/dataset pairs, in their canonical order.
pub const BUNDLED: [(Model, Dataset); 6] = [
    (Model::ResNet32, Dataset::Cifar100),
    (Model::Vgg16, Dataset::Cifar100),
    (Model::ResNet18, Dataset::Cifar100),
    (Model::ResNet32, Dataset::TinyImageNet),
    (Model::Vgg16, Dataset::TinyImageNet),
    (Model::ResNet18, Dataset::TinyImageNet),
];

pub fn network_name(model: Model, dataset: Dataset) -> String {
    format!("{}-{}", model.slug(), dataset.slug())
}

pub fn layers(model: Model, dataset: Dataset) -> Vec<ArchLayer> {
    let side = dataset.side();
    let classes = dataset.classes();
    match model {
        Model::ResNet32 => resnet(side, classes, 16, &[(16, 1), (32, 2), (64, 2)], 5),
        Model::ResNet18 => resnet(side, classes, 64, &[(64, 1), (128, 2), (256, 2), (512, 2)], 2),
        Model::Vgg16 => vgg16(side, classes),
    }
}

fn conv(side: u64, cin: u64, cout: u64, k: u64, stride: u64) -> ArchLayer {
    let out = side / stride;
    ArchLayer::Linear(LinearShape {
        macs: out * out * cin * cout * k * k,
        input_elements: side * side * cin,
        output_elements: out * out * cout,
        output_hw: out * out,
        in_channels: cin,
    })
}

fn fc(inputs: u64, outputs: u64) -> ArchLayer {
    ArchLayer::Linear(LinearShape {
        macs: inputs * outputs,
        input_elements: inputs,
        output_elements: outputs,
        output_hw: 1,
        in_channels: inputs,
    })
}

fn resnet(side: u64, classes: u64, stem: u64, stages: &[(u64, u64)], blocks: usize) -> Vec<ArchLayer> {
    let mut out = vec![conv(side, 3, stem, 3, 1), ArchLayer::Relu(side * side * stem)];
    let mut h = side;
    let mut c = stem;
    for &(width, first_stride) in stages {
        for b in 0..blocks {
            let stride = if b == 0 { first_stride } else { 1 };
            let ho = h / stride;
            out.push(conv(h, c, width, 3, stride));
            out.push(ArchLayer::Relu(ho * ho * width));
            out.push(conv(ho, width, width, 3, 1));
            if stride != 1 || c != width {
                out.push(conv(h, c, width, 1, stride));
            }
            out.push(ArchLayer::Relu(ho * ho * width));
            h = ho;
            c = width;
        }
    }
    out.push(fc(c, classes));
    out
}

fn vgg16(side: u64, classes: u64) -> Vec<ArchLayer> {
    const CFG: [u64; 18] = [64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0];
    let mut out = Vec::new();
    let mut h = side;
    let mut c = 3;
    for &v in &CFG {
        if v == 0 {
            h /= 2;
            continue;
        }
        out.push(conv(h, c, v, 3, 1));
        out.push(ArchLayer::Relu(h * h * v));
        c = v;
    }
    out.push(fc(c * h * h, 4096));
    out.push(ArchLayer::Relu(4096));
    out.push(fc(4096, 4096));
    out.push(ArchLayer::Relu(4096));
    out.push(fc(4096, classes));
    out
}
