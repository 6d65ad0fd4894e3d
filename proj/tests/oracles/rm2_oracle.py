# Literal transcription of the rm^2 formula, kept apart from the C++ code.
# Prints the value for the fixed vectors used by the metric checks.
import math

y = [5.0, 5.3, 6.1, 7.4, 5.0, 8.2, 6.6, 7.0, 5.9, 6.3, 7.7, 5.1]
p = [5.2, 5.1, 6.4, 7.0, 5.5, 7.6, 6.9, 6.5, 6.0, 6.1, 7.9, 5.6]

n = len(y)
ybar = sum(y) / n
pbar = sum(p) / n
cov = sum((a - ybar) * (b - pbar) for a, b in zip(y, p))
vy = sum((a - ybar) ** 2 for a in y)
vp = sum((b - pbar) ** 2 for b in p)
r2 = (cov / math.sqrt(vy * vp)) ** 2
k = sum(a * b for a, b in zip(y, p)) / sum(b * b for b in p)
r02 = 1 - sum((a - k * b) ** 2 for a, b in zip(y, p)) / vy
rm2 = r2 * (1 - math.sqrt(abs(r2 - r02)))
print(repr(rm2))
