"""docgraph: document image classification via region graphs and a
SortPooling graph convolutional network, CPU-only."""

__version__ = "0.1.0"
