# scene: study_room.json
print("start")
grid = [[(i, j, k) for i in range(100) for j in range(100)] for k in range(100)]
print(len(grid))
