"""
Blended convolution and synthesis on the unit ball.

Usage:
    bcs derive-basis                                          [options]
    bcs bin INPUT...                                          [options]
    bcs transform GRID [--reconstruct]                        [options]
    bcs convolve TENSOR KERNEL                                [options]
    bcs train                                                 [options]
    bcs retrieve CHECKPOINT [--self-query] [--metric=METRIC]  [options]
    bcs bench                                                 [options]
    bcs --help

Options:
    --config=PATH         YAML or JSON run configuration
    --seed=N              seed of every random draw
    --out=DIR             output directory
    --threads=N           worker threads
    --basis=PATH          basis document, derived from the config if absent
    --n-max=N             band limit
    --mode=MODE           radial atoms: exponential or truncated-sum
    --dims=DIMS           grid bin counts r,theta,phi, e.g. 25,36,18
    --lattice=DIMS        convolution lattice r',alpha,beta, e.g. 8,8,8
    --translation=MODE    theorem, exact or rotation
    --projection=MODE     learned, orthogonal or base
    --verbose, -v
"""
