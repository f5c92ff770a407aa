from . import regenerate

for p in regenerate():
    print(p)
