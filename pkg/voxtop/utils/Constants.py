class Material:
    """
    Default linear-elastic material constants (modified SIMP)
    """

    e0 = 1.0
    e_min = 1e-9
    penal = 3.0
    nu = 0.3


class ReferenceDomain:
    """
    Reference MBB-beam design domain: 24 x 12 x 12 cubic elements over 2 m x 1 m x 1 m
    """

    nx = 24
    ny = 12
    nz = 12
    lx = 2.0
    ly = 1.0
    lz = 1.0


class SIMPDefaults:
    rmin_elements = 1.5  # Filter radius, in element edge lengths
    move = 0.2
    damping = 0.5
    change_tol = 0.01
    max_iter = 200
    pcg_tol = 1e-8


class SamplerDefaults:
    vf_mean = 0.28
    vf_std = 0.07
    vf_clamp = (0.07, 0.5)
    load_lambda = 4.0
    load_clamp = (1, 10)
    bc_cases = (1, 2, 3, 4)
    # In-face fractional ranges for the x, y and z coordinates of a load anchor
    anchor_ranges = ((0.0, 1.0), (0.0, 0.5), (0.0, 0.5))


class Strategies:
    """
    Iteration-sampling strategies for the density snapshot m, mapped to their Poisson mean

    A mean of None indicates uniform sampling
    """

    means = {"uniform": None, "poisson5": 5.0, "poisson10": 10.0, "poisson30": 30.0}


class Channels:
    """
    Input channel layout of an encoded sample, and the named subsets used for ablation
    """

    count = 8
    names = (
        "density",
        "gradient",
        "force_x",
        "force_y",
        "force_z",
        "constraint_x",
        "constraint_y",
        "constraint_z",
    )
    groups = {"density": (0,), "gradient": (1,), "boundary": (2, 3, 4, 5, 6, 7)}


class Formats:
    """
    Binary file magics & versions
    """

    dataset_magic = b"TOPO3DDS"
    dataset_version = 1
    network_magic = b"TOPO3DNN"
    network_version = 1
    field_magic = b"TOPO3DFD"
    field_version = 1


class Process:
    tau = 0.05
    gap = 5
    threshold = 0.5


class TrainDefaults:
    lr = 0.01
    momentum = 0.9
    beta = 1.0
    epochs = 30
    eps = 1e-7


class ExitCodes:
    ok = 0
    failure = 1
    usage = 2
    config = 3
    missing_input = 4
    numerical = 5
    dataset_format = 6


class Augment:
    fraction = 0.4  # Share of training records that receive a rotated copy
