# Adaptive finite element toolkit for elliptic PDEs on triangular meshes
