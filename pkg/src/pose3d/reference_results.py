"""Published Human3.6M test-server results used as report baselines.

KDE is the spatiotemporal HOG-KDE baseline reported on the dataset
leaderboard; 3DCNN is the published result of the architecture this package
implements. All values are MPJPE in millimetres, as printed (integer
rounded). These are informational reference numbers for report formatting
and arithmetic checks; they are not reproducible at desk scale, which needs
the access-restricted dataset, withheld test labels, and GPU-scale training.
"""

H36M_ACTIONS = (
    "Directions",
    "Discussion",
    "Eating",
    "Greeting",
    "Phoning",
    "Posing",
    "Purchases",
    "Sitting",
    "Sitting Down",
    "Smoking",
    "Taking Photo",
    "Waiting",
    "Walking",
    "Walking with Dog",
    "Walking Together",
)

KDE_MPJPE_MM = {
    "Directions": 117.0,
    "Discussion": 108.0,
    "Eating": 91.0,
    "Greeting": 129.0,
    "Phoning": 104.0,
    "Posing": 130.0,
    "Purchases": 134.0,
    "Sitting": 135.0,
    "Sitting Down": 200.0,
    "Smoking": 117.0,
    "Taking Photo": 195.0,
    "Waiting": 132.0,
    "Walking": 115.0,
    "Walking with Dog": 162.0,
    "Walking Together": 156.0,
}

CNN3D_MPJPE_MM = {
    "Directions": 91.0,
    "Discussion": 89.0,
    "Eating": 94.0,
    "Greeting": 102.0,
    "Phoning": 105.0,
    "Posing": 99.0,
    "Purchases": 112.0,
    "Sitting": 151.0,
    "Sitting Down": 239.0,
    "Smoking": 109.0,
    "Taking Photo": 151.0,
    "Waiting": 106.0,
    "Walking": 101.0,
    "Walking with Dog": 141.0,
    "Walking Together": 106.0,
}

# Averages as printed in the published table. Note: the unweighted mean of
# the printed per-action rows is 119.73 (ours) / 135.0 (KDE), so the printed
# averages were evidently computed on unrounded (or frame-weighted) data.
PUBLISHED_AVERAGE_MM = {"kde": 133.0, "3dcnn": 119.0}
PUBLISHED_IMPROVEMENT_PCT = 11.0
