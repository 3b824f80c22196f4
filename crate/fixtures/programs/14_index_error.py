# scene: study_room.json
doors = list(filter(object_set=scene(), category="door"))
print(len(doors))
print(doors[1].xyz)
