// Generated once from a fixed seed (isotropic Gaussian, sigma = 31/5, points
// restricted to the radius-15 disc). Each row is (ax, ay, bx, by).
pub(crate) const BINARY_PATTERN: [[i8; 4]; 256] = [
    [0, -6, -1, 10],
    [-2, -4, -6, 4],
    [8, -4, -6, 10],
    [6, 7, 10, 3],
    [-5, -4, 1, -3],
    [-10, -1, -5, 10],
    [4, 6, -3, 12],
    [7, 5, 4, 4],
    [3, -6, -5, -1],
    [2, -2, -2, 4],
    [3, 3, 0, 12],
    [2, -12, -2, -5],
    [-8, -1, 4, 3],
    [2, 2, -8, -11],
    [-6, -3, -1, -6],
    [8, -8, 11, 1],
    [-8, 0, 4, 1],
    [1, 0, 6, 8],
    [2, 1, -2, -4],
    [2, -10, -1, -7],
    [-6, 3, 12, -7],
    [-7, -9, -10, -1],
    [2, -5, 3, -1],
    [0, 0, -7, 2],
    [-5, -2, 0, -3],
    [-2, 0, 2, 5],
    [-3, 4, 5, 1],
    [0, 6, -1, -7],
    [2, 3, 11, -5],
    [2, 5, 0, 2],
    [2, -10, -7, 4],
    [2, 10, -4, 3],
    [2, 3, 3, 2],
    [7, -2, 5, 7],
    [6, 2, -5, 9],
    [-1, 0, 4, -1],
    [3, -5, 1, 3],
    [-9, 1, 9, 2],
    [0, 2, 6, -13],
    [5, -3, 1, 5],
    [4, -10, -9, -4],
    [-11, 3, -1, 6],
    [3, -3, -3, 10],
    [6, 5, -9, 5],
    [-2, 3, 0, 4],
    [3, -9, 13, -3],
    [-5, -12, 9, -1],
    [3, 13, 3, 5],
    [0, 0, 1, -10],
    [-11, -4, -2, 0],
    [-2, -2, -1, 11],
    [1, -13, 10, -2],
    [-7, 0, 11, -3],
    [1, 1, -3, -2],
    [-1, 4, 3, 7],
    [-6, 5, 0, 2],
    [2, -3, 4, -6],
    [-5, 1, 7, 2],
    [-9, -5, -7, -7],
    [2, 3, 0, 8],
    [9, 9, -3, 2],
    [-4, -6, -7, 11],
    [6, -7, -2, 0],
    [2, -2, 5, -3],
    [8, 5, -1, 13],
    [8, 3, 3, -9],
    [5, -2, -8, 5],
    [7, -5, -4, -3],
    [0, 3, -7, -3],
    [1, 8, -4, 4],
    [4, 3, 0, -1],
    [0, 8, 1, -8],
    [6, -4, -13, -2],
    [8, 6, 2, 10],
    [2, 0, -2, 11],
    [6, -5, 2, 6],
    [-8, 3, 1, 8],
    [-6, 11, -1, -3],
    [4, -5, 3, 5],
    [3, 5, -10, -10],
    [-3, 4, 2, -12],
    [2, -4, 3, 1],
    [-7, 7, -1, -9],
    [-5, -1, 12, -5],
    [2, 4, 6, 2],
    [2, -5, -2, -2],
    [-2, 11, 0, -6],
    [-2, -1, -9, -10],
    [-5, -7, -2, 7],
    [-6, -7, 3, -3],
    [-8, -1, 0, -6],
    [-1, -6, -4, 9],
    [-3, -1, 1, -2],
    [0, -11, -1, -2],
    [8, -11, 4, -5],
    [5, 0, -9, -4],
    [-6, -4, -3, 4],
    [-3, -12, 8, -2],
    [-2, -2, -5, 4],
    [0, -5, 0, 4],
    [-13, 3, 5, 3],
    [5, -12, 5, 6],
    [-5, 1, 1, -4],
    [8, -9, 4, -7],
    [2, -8, -1, -9],
    [7, -4, -7, -1],
    [1, -4, -7, -2],
    [5, -3, 4, -7],
    [-1, -7, 3, 4],
    [4, 7, 3, 7],
    [4, 0, 6, -5],
    [-5, -1, -13, -7],
    [2, -10, 4, -5],
    [10, 0, -9, -1],
    [0, -5, 9, 4],
    [1, -3, -1, -4],
    [7, 9, -1, 4],
    [-4, 9, 2, 2],
    [11, -1, -8, -10],
    [5, 1, -6, -1],
    [-9, 7, -4, -7],
    [1, 8, 5, 1],
    [-1, 6, -8, 0],
    [-4, 8, 0, -5],
    [4, -4, 2, 2],
    [-1, 3, 4, 3],
    [1, 6, 6, -1],
    [-11, -8, 6, 6],
    [-8, 1, 0, 9],
    [-2, 1, -5, 2],
    [4, 1, 4, 4],
    [-3, -2, 5, -9],
    [-8, -12, 13, 3],
    [4, 3, -2, 1],
    [12, -5, -1, -5],
    [0, -3, -1, -4],
    [-3, -5, 2, -4],
    [-11, -3, 2, -3],
    [-4, 4, -3, 10],
    [-3, 1, -7, 3],
    [2, -5, 7, -3],
    [8, -9, 3, -1],
    [4, 5, 5, -4],
    [5, 9, 1, 2],
    [8, -8, 12, 5],
    [-1, -6, 14, -2],
    [-6, 3, 7, -1],
    [6, 5, -11, -5],
    [4, 7, -2, 8],
    [1, -2, -9, -1],
    [-7, 1, -9, -4],
    [-13, 5, -3, -10],
    [4, 11, -10, 3],
    [-5, -7, 10, 6],
    [10, 0, 2, 2],
    [0, -1, -1, -1],
    [2, 6, 0, -8],
    [-5, 1, -5, -1],
    [-3, -4, 5, -4],
    [-3, -1, -11, -6],
    [-7, -2, -7, 4],
    [-7, 5, 1, 4],
    [-9, -2, 10, 8],
    [0, -8, -1, 4],
    [0, 6, -2, -5],
    [4, 4, 1, 3],
    [-6, -2, -3, -6],
    [4, 0, -4, -5],
    [-1, 3, -7, -13],
    [-3, -2, -1, -1],
    [-2, 4, 1, 9],
    [2, 3, 2, -3],
    [-3, -11, -8, 0],
    [0, -3, -6, -5],
    [-11, -1, 8, 4],
    [9, -11, -2, 5],
    [4, -8, 8, -4],
    [2, 3, -6, 4],
    [-10, 5, 1, 6],
    [9, 2, -4, -5],
    [4, 8, -4, -6],
    [-4, -1, -5, -4],
    [0, -7, -4, 9],
    [1, -11, 11, 8],
    [-5, -4, -11, 1],
    [-11, -4, -2, -11],
    [-2, -6, 11, -3],
    [2, -10, 15, 0],
    [-1, 6, 6, -13],
    [-4, -4, -6, 10],
    [6, 7, -8, -1],
    [-10, 0, 4, 5],
    [12, 4, -5, -6],
    [4, 0, -2, 8],
    [-1, 0, -2, 6],
    [0, -5, 0, -1],
    [-6, -1, -5, 0],
    [-1, 8, -8, -5],
    [-5, -12, -3, 4],
    [-2, -5, -3, -13],
    [-3, -3, 1, 5],
    [-2, 12, 5, 3],
    [-5, 6, 0, -1],
    [-8, 1, 5, 0],
    [-7, 2, -6, -9],
    [1, 0, 5, -2],
    [-12, 1, 4, -2],
    [0, -5, 1, -11],
    [-2, -6, 1, 2],
    [-11, 2, -10, -2],
    [-12, -6, 6, -9],
    [-5, -3, -2, -7],
    [-6, 11, 3, 0],
    [3, -6, -11, -1],
    [-1, 7, 1, -10],
    [-2, 0, -6, -3],
    [-5, 8, 8, -1],
    [4, 7, -3, 6],
    [6, -8, -4, 7],
    [1, -5, -5, -12],
    [2, 6, -12, 0],
    [3, 4, -4, -2],
    [-10, 2, -12, 2],
    [-4, 0, 13, 1],
    [9, -8, -10, -2],
    [11, -1, -4, -4],
    [-8, 4, -6, 0],
    [-8, 1, -2, 0],
    [-3, 2, 10, 4],
    [-5, 9, -11, 2],
    [-11, -1, -4, -9],
    [-5, 1, -6, 0],
    [-1, 6, -1, -10],
    [-1, 12, 9, 10],
    [0, 1, 1, 8],
    [10, -4, 7, 3],
    [-8, -2, -5, 3],
    [-10, -2, 3, 0],
    [2, 7, 8, -2],
    [1, 8, 6, 7],
    [3, 2, 1, -8],
    [4, 2, 4, 1],
    [-7, -6, -6, 1],
    [0, 0, -10, 4],
    [4, -1, 0, -2],
    [1, 0, -6, -4],
    [-9, 8, 3, 7],
    [-6, 1, 3, -6],
    [4, -5, -3, -4],
    [-10, 1, 2, -1],
    [7, -2, 1, -2],
    [4, -8, 2, -2],
    [11, 0, -5, 1],
    [-2, 0, 4, 6],
    [-3, -6, 8, -5],
    [-2, 2, 6, 8],
];
