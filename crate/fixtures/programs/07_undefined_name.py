# scene: study_room.json
print(objects_on_table)
