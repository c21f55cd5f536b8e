import numpy as np

arr = np.array(image_clue_0.convert("RGB")).astype(float)
region = arr[310:360, 420:480]

mean_rgb = region.reshape(-1, 3).mean(axis=0)
std_rgb = region.reshape(-1, 3).std(axis=0)
print("mean RGB:", np.round(mean_rgb, 1))
print("std RGB:", np.round(std_rgb, 1))

palette = {"red": (200, 40, 40), "green": (40, 160, 60), "blue": (40, 70, 190), "yellow": (220, 200, 50)}
dist = {name: np.linalg.norm(mean_rgb - np.array(c)) for name, c in palette.items()}
print("closest colour:", min(dist, key=dist.get))
